#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gpo/errors.hpp"
#include "gpo/numeric.hpp"
#include "gpo/parallel.hpp"
#include "gpo/rng.hpp"

// One-dimensional mixture-of-Gaussians setting in which the mu-weighted squared
// loss of a shifted policy has local minima that the KL divergence does not share.

namespace gpo {

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> stds;

  void validate() const {
    if (weights.empty() || weights.size() != means.size() || weights.size() != stds.size()) {
      throw ConfigError("mixture needs equal-length, nonempty weights/means/stds");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (!(weights[k] > 0.0)) throw ConfigError("mixture weights must be positive");
      if (!(stds[k] > 0.0)) throw ConfigError("mixture stds must be positive");
      total += weights[k];
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  }
};

inline double normal_log_pdf(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// log of the mixture density, via log-sum-exp so far tails stay finite.
inline double log_mixture_pdf(const GaussianMixture& m, double x) {
  double terms[16];
  std::vector<double> spill;
  double* buf = terms;
  if (m.weights.size() > 16) {
    spill.resize(m.weights.size());
    buf = spill.data();
  }
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    buf[k] = std::log(m.weights[k]) + normal_log_pdf(x, m.means[k], m.stds[k]);
  }
  return log_sum_exp(std::span<const double>(buf, m.weights.size()));
}

inline double mixture_pdf(const GaussianMixture& m, double x) {
  double total = 0.0;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    total += m.weights[k] * std::exp(normal_log_pdf(x, m.means[k], m.stds[k]));
  }
  return total;
}

/// Reference policy: 0.3 N(-0.8, 0.1^2) + 0.4 N(0, 0.1^2) + 0.3 N(0.8, 0.1^2).
inline GaussianMixture reference_mixture() {
  return {{0.3, 0.4, 0.3}, {-0.8, 0.0, 0.8}, {0.1, 0.1, 0.1}};
}

/// Behavior distribution: equal-weight N(u_k, 0.05^2), u_k ~ U(-1, 1) i.i.d. from `seed`.
inline GaussianMixture behavior_mixture(std::uint64_t seed) {
  Rng rng = named_stream(seed, "gaussians/mu");
  GaussianMixture m;
  for (int k = 0; k < 3; ++k) {
    m.weights.push_back(1.0 / 3.0);
    m.means.push_back(-1.0 + 2.0 * uniform01(rng));
    m.stds.push_back(0.05);
  }
  m.weights[2] = 1.0 - m.weights[0] - m.weights[1];
  return m;
}

/// pi_theta(x) = base(x - shift).
struct ShiftPolicy {
  GaussianMixture base;
  double shift = 0.0;

  double log_density(double x) const { return log_mixture_pdf(base, x - shift); }
  double density(double x) const { return mixture_pdf(base, x - shift); }
};

inline double draw_mixture(const GaussianMixture& m, Rng& rng) {
  const double u = uniform01(rng);
  std::size_t k = 0;
  double acc = m.weights[0];
  while (u >= acc && k + 1 < m.weights.size()) acc += m.weights[++k];
  std::normal_distribution<double> normal(m.means[k], m.stds[k]);
  return normal(rng);
}

inline std::vector<double> sample_mixture(const GaussianMixture& m, std::size_t n,
                                          std::uint64_t seed,
                                          std::string_view stream = "gaussians/sample") {
  m.validate();
  if (n == 0) throw ConfigError("sample count must be positive");
  Rng rng = named_stream(seed, stream);
  std::vector<double> xs(n);
  for (auto& x : xs) x = draw_mixture(m, rng);
  return xs;
}

struct McEstimate {
  double value;
  double std_error;
};

namespace detail {

inline McEstimate mean_and_stderr(std::span<const double> terms) {
  double mean = 0.0;
  for (double t : terms) mean += t;
  mean /= static_cast<double>(terms.size());
  double var = 0.0;
  for (double t : terms) var += (t - mean) * (t - mean);
  const double n = static_cast<double>(terms.size());
  var = terms.size() > 1 ? var / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

// log pi_theta(x) - log ref(x)
inline double shift_log_ratio(const ShiftPolicy& theta, const GaussianMixture& ref, double x) {
  return theta.log_density(x) - log_mixture_pdf(ref, x);
}

inline McEstimate kl_from_base_draws(const ShiftPolicy& theta, const GaussianMixture& ref,
                                     std::span<const double> base_draws) {
  std::vector<double> terms(base_draws.size());
  for (std::size_t i = 0; i < base_draws.size(); ++i) {
    terms[i] = shift_log_ratio(theta, ref, base_draws[i] + theta.shift);
  }
  return mean_and_stderr(terms);
}

inline McEstimate mu_sq_from_draws(const ShiftPolicy& theta, const GaussianMixture& ref,
                                   std::span<const double> mu_draws) {
  std::vector<double> terms(mu_draws.size() / 2);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double d = shift_log_ratio(theta, ref, mu_draws[2 * i]) -
                     shift_log_ratio(theta, ref, mu_draws[2 * i + 1]);
    terms[i] = 0.5 * d * d;
  }
  return mean_and_stderr(terms);
}

}  // namespace detail

/// Monte Carlo KL(pi_theta || ref) from n draws of pi_theta.
inline McEstimate estimate_kl(const ShiftPolicy& theta, const GaussianMixture& ref, std::size_t n,
                              std::uint64_t seed) {
  const std::vector<double> base = sample_mixture(theta.base, n, seed, "gaussians/theta");
  return detail::kl_from_base_draws(theta, ref, base);
}

/// Monte Carlo E_{(x, x') ~ mu x mu}[(L(x) - L(x'))^2 / 2], L = log pi_theta / ref,
/// from n disjoint pairs of a 2n-draw stream.
inline McEstimate estimate_mu_sq(const ShiftPolicy& theta, const GaussianMixture& ref,
                                 const GaussianMixture& mu, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ConfigError("mu-weighted squared loss needs at least 2 pairs");
  const std::vector<double> draws = sample_mixture(mu, 2 * n, seed, "gaussians/mu_pairs");
  return detail::mu_sq_from_draws(theta, ref, draws);
}

struct ScanRow {
  double c;
  double kl;
  double mu_sq;
};

inline std::vector<double> uniform_grid(std::size_t points, double lo = -1.0, double hi = 1.0) {
  if (points == 0) throw ConfigError("grid must have at least one point");
  if (points == 1) return {0.5 * (lo + hi)};
  std::vector<double> grid(points);
  const double span = hi - lo;
  const double last = static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = lo + span * static_cast<double>(i) / last;
  return grid;
}

/// One row per shift. With common random numbers (default) every grid point reuses
/// the same draws, which keeps both curves smooth in c; otherwise point i uses seed + i.
inline std::vector<ScanRow> scan_shift(const GaussianMixture& ref, const GaussianMixture& mu,
                                       const std::vector<double>& c_grid, std::size_t n,
                                       std::uint64_t seed, bool common_random_numbers = true,
                                       std::size_t jobs = 1) {
  if (c_grid.empty()) throw ConfigError("shift grid is empty");
  ref.validate();
  mu.validate();
  std::vector<ScanRow> rows(c_grid.size());
  if (common_random_numbers) {
    const std::vector<double> base = sample_mixture(ref, n, seed, "gaussians/theta");
    const std::vector<double> pairs = sample_mixture(mu, 2 * n, seed, "gaussians/mu_pairs");
    parallel_for(c_grid.size(), jobs, [&](std::size_t i) {
      const ShiftPolicy theta{ref, c_grid[i]};
      rows[i] = {c_grid[i], detail::kl_from_base_draws(theta, ref, base).value,
                 detail::mu_sq_from_draws(theta, ref, pairs).value};
    });
  } else {
    parallel_for(c_grid.size(), jobs, [&](std::size_t i) {
      const ShiftPolicy theta{ref, c_grid[i]};
      rows[i] = {c_grid[i], estimate_kl(theta, ref, n, seed + i).value,
                 estimate_mu_sq(theta, ref, mu, n, seed + i).value};
    });
  }
  return rows;
}

inline std::string scan_csv(const std::vector<ScanRow>& rows) {
  std::string out = "c,kl,mu_sq\n";
  for (const auto& r : rows) {
    out += format_double(r.c) + ',' + format_double(r.kl) + ',' + format_double(r.mu_sq) + '\n';
  }
  return out;
}

/// Indices i whose value is strictly below every other value in the centred
/// window [i - window/2, i + window/2]. Points without a full window are skipped.
inline std::vector<std::size_t> local_minima(std::span<const double> values, std::size_t window) {
  if (window < 3 || window % 2 == 0) throw ConfigError("window must be an odd integer >= 3");
  if (window > values.size()) throw ConfigError("window larger than the table");
  const std::size_t half = window / 2;
  std::vector<std::size_t> minima;
  for (std::size_t i = half; i + half < values.size(); ++i) {
    bool strict = true;
    for (std::size_t j = i - half; j <= i + half && strict; ++j) {
      if (j != i && !(values[i] < values[j])) strict = false;
    }
    if (strict) minima.push_back(i);
  }
  return minima;
}

enum class ScanColumn { kl, mu_sq };

inline std::vector<double> find_local_minima(const std::vector<ScanRow>& table, ScanColumn column,
                                             std::size_t window) {
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (!(table[i - 1].c < table[i].c)) throw ConfigError("scan table must be sorted by c");
  }
  std::vector<double> values(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    values[i] = column == ScanColumn::kl ? table[i].kl : table[i].mu_sq;
  }
  std::vector<double> cs;
  for (std::size_t i : local_minima(values, window)) cs.push_back(table[i].c);
  return cs;
}

/// True when `values` is strictly monotone on [i - half, i + half].
inline bool strictly_monotone_around(std::span<const double> values, std::size_t i,
                                     std::size_t half) {
  if (i < half || i + half >= values.size()) return false;
  bool up = true;
  bool down = true;
  for (std::size_t j = i - half; j < i + half; ++j) {
    up = up && values[j] < values[j + 1];
    down = down && values[j] > values[j + 1];
  }
  return up || down;
}

struct CounterexampleReport {
  std::uint64_t seed = 0;
  GaussianMixture mu;
  std::vector<ScanRow> scan;
  std::vector<double> mu_sq_minima;
  std::vector<double> kl_minima;
  /// mu_sq minima where the kl column is strictly monotone across the window.
  std::vector<double> witnesses;
  bool zero_at_origin = false;

  bool found() const { return zero_at_origin && mu_sq_minima.size() >= 2 && !witnesses.empty(); }
};

inline constexpr std::size_t kDefaultScanSamples = 2000;
inline constexpr std::size_t kDefaultScanPoints = 401;
inline constexpr std::size_t kDefaultMinimaWindow = 5;
/// Seed whose behavior mixture reproduces the counterexample (first hit of a
/// search over seeds 0..4).
inline constexpr std::uint64_t kCounterexampleSeed = 0;

inline CounterexampleReport analyze_counterexample(std::uint64_t seed,
                                                   std::size_t n = kDefaultScanSamples,
                                                   std::size_t points = kDefaultScanPoints,
                                                   std::size_t window = kDefaultMinimaWindow,
                                                   std::size_t jobs = 1) {
  CounterexampleReport report;
  report.seed = seed;
  report.mu = behavior_mixture(seed);
  const GaussianMixture ref = reference_mixture();
  report.scan = scan_shift(ref, report.mu, uniform_grid(points), n, seed, true, jobs);
  report.mu_sq_minima = find_local_minima(report.scan, ScanColumn::mu_sq, window);
  report.kl_minima = find_local_minima(report.scan, ScanColumn::kl, window);

  std::vector<double> kl(report.scan.size());
  std::vector<double> mu_sq(report.scan.size());
  for (std::size_t i = 0; i < report.scan.size(); ++i) {
    kl[i] = report.scan[i].kl;
    mu_sq[i] = report.scan[i].mu_sq;
    if (report.scan[i].c == 0.0) {
      report.zero_at_origin = report.scan[i].kl == 0.0 && report.scan[i].mu_sq == 0.0;
    }
  }
  for (std::size_t i : local_minima(mu_sq, window)) {
    if (strictly_monotone_around(kl, i, window / 2)) report.witnesses.push_back(report.scan[i].c);
  }
  return report;
}

/// Tries seeds start, start+1, ... and returns the first counterexample found.
inline std::optional<CounterexampleReport> search_counterexample(
    std::uint64_t start, std::size_t attempts, std::size_t n = kDefaultScanSamples,
    std::size_t points = kDefaultScanPoints, std::size_t window = kDefaultMinimaWindow,
    std::size_t jobs = 1) {
  for (std::size_t k = 0; k < attempts; ++k) {
    CounterexampleReport report = analyze_counterexample(start + k, n, points, window, jobs);
    if (report.found()) return report;
  }
  return std::nullopt;
}

}  // namespace gpo
