#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gpo/errors.hpp"
#include "gpo/loss.hpp"
#include "gpo/numeric.hpp"
#include "gpo/policy.hpp"
#include "gpo/rng.hpp"

namespace gpo {

struct TrainConfig {
  std::string loss = "logistic";
  double beta = 1.0;
  double learning_rate = 0.1;
  std::size_t steps = 1000;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;
  /// 0 = full-batch exact expectation; otherwise pairs sampled per step under mu.
  std::size_t minibatch = 0;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be nonnegative");
    }
    if (steps == 0) throw ConfigError("steps must be positive");
    if (eval_every == 0 || eval_every > steps) {
      throw ConfigError("eval_every must be in [1, steps]");
    }
  }
};

struct TraceRecord {
  std::size_t step = 0;
  double gpo_loss = 0.0;
  double kl = 0.0;
  double mu_sq = 0.0;
  std::map<std::string, double> extra;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

using Trace = std::vector<TraceRecord>;

/// Training stopped because the iterate left the finite region (|logit| > 1e4 or NaN).
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::size_t step, Trace trace)
      : NumericError(what), step_(step), trace_(std::move(trace)) {}

  std::size_t step() const { return step_; }
  const Trace& trace() const { return trace_; }

 private:
  std::size_t step_;
  Trace trace_;
};

struct TrainResult {
  SoftmaxPolicy final_policy;
  Trace trace;
};

/// Hook for experiment-specific columns, called at every evaluation point.
using ExtraMetrics = std::function<void(const SoftmaxPolicy&, std::map<std::string, double>&)>;

inline constexpr double kDivergenceLogitBound = 1e4;

namespace detail {

inline TraceRecord evaluate(std::size_t step, const ConvexLoss& f, double beta,
                            const PreferenceDataset& data, const SoftmaxPolicy& theta,
                            const SoftmaxPolicy& ref, const ExtraMetrics& extras) {
  TraceRecord rec;
  rec.step = step;
  rec.gpo_loss = gpo_loss(f, beta, data, theta, ref);
  rec.kl = total_kl(theta, ref);
  rec.mu_sq = mu_weighted_squared_loss(data, theta, ref);
  if (extras) extras(theta, rec.extra);
  return rec;
}

inline bool escaped(const SoftmaxPolicy& theta) {
  const auto& l = theta.logits();
  return !l.allFinite() || l.cwiseAbs().maxCoeff() > kDivergenceLogitBound;
}

// Gradient of the mean loss over `count` pairs drawn i.i.d. from the dataset weights.
inline Logits sampled_gradient(const ConvexLoss& f, double beta, const PreferenceDataset& data,
                               const std::vector<double>& cumulative, std::size_t count,
                               const SoftmaxPolicy& theta, const SoftmaxPolicy& ref, Rng& rng) {
  Logits grad = Logits::Zero(theta.logits().rows(), theta.logits().cols());
  const double scale = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = uniform01(rng) * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto& p = data.pairs()[static_cast<std::size_t>(it - cumulative.begin())];
    const double coeff = scale * f.first_deriv(beta * log_ratio_diff(theta, ref, p)) * beta;
    const auto c = static_cast<Eigen::Index>(p.context);
    grad(c, static_cast<Eigen::Index>(p.winner)) += coeff;
    grad(c, static_cast<Eigen::Index>(p.loser)) -= coeff;
  }
  return grad;
}

}  // namespace detail

/// Gradient descent theta <- theta - lr * grad E_mu[f(beta rho)].
///
/// Records step 0, every `eval_every` steps and the final step. Throws
/// DivergenceError (carrying the trace so far) when the logits escape.
inline TrainResult train(const TrainConfig& config, const PreferenceDataset& data,
                         const SoftmaxPolicy& ref, const SoftmaxPolicy& init,
                         const ExtraMetrics& extras = {}) {
  config.validate();
  detail::require_consistent(data, init, ref);
  const ConvexLoss f = make_loss(config.loss);

  SoftmaxPolicy theta = init;
  Trace trace;
  trace.push_back(detail::evaluate(0, f, config.beta, data, theta, ref, extras));

  std::vector<double> cumulative;
  Rng rng = named_stream(config.seed, "trainer/minibatch");
  if (config.minibatch > 0) {
    cumulative.reserve(data.size());
    double acc = 0.0;
    for (double w : data.weights()) cumulative.push_back(acc += w);
  }

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const Logits grad =
        config.minibatch > 0
            ? detail::sampled_gradient(f, config.beta, data, cumulative, config.minibatch, theta,
                                       ref, rng)
            : gpo_gradient(f, config.beta, data, theta, ref);
    theta.mutable_logits() -= config.learning_rate * grad;
    if (detail::escaped(theta)) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + " (loss '" +
                                config.loss + "', beta " + format_double(config.beta) + ")",
                            step, trace);
    }
    if (step % config.eval_every == 0 || step == config.steps) {
      TraceRecord rec = detail::evaluate(step, f, config.beta, data, theta, ref, extras);
      if (!std::isfinite(rec.gpo_loss)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step), step, trace);
      }
      trace.push_back(std::move(rec));
    }
  }
  return {std::move(theta), std::move(trace)};
}

struct MinimizeResult {
  SoftmaxPolicy policy;
  double grad_norm;
  std::size_t iterations;
  bool converged;
};

/// Minimizes E_mu[f(beta rho)] over logits by gradient descent with Armijo
/// backtracking (step doubles after each accepted step). Once value changes fall
/// below rounding, a step that shrinks the gradient norm is accepted instead.
/// Stops when the gradient norm drops below `tol`.
inline MinimizeResult minimize_gpo_loss(const ConvexLoss& f, double beta,
                                        const PreferenceDataset& data, const SoftmaxPolicy& ref,
                                        const SoftmaxPolicy& init, double tol,
                                        std::size_t max_iters = 200000) {
  SoftmaxPolicy theta = init;
  double value = gpo_loss(f, beta, data, theta, ref);
  Logits grad = gpo_gradient(f, beta, data, theta, ref);
  double step = 1.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const double gnorm = grad.norm();
    if (gnorm < tol) return {theta, gnorm, it, true};
    const double g2 = gnorm * gnorm;
    bool accepted = false;
    while (step > 1e-300) {
      SoftmaxPolicy trial = theta;
      trial.mutable_logits() -= step * grad;
      if (!detail::escaped(trial)) {
        const double trial_value = gpo_loss(f, beta, data, trial, ref);
        const bool sufficient = trial_value <= value - 1e-4 * step * g2;
        const bool flat = std::abs(trial_value - value) <= 1e-14 * std::max(1.0, std::abs(value));
        if (sufficient || flat) {
          Logits trial_grad = gpo_gradient(f, beta, data, trial, ref);
          // Inside the rounding band the value says nothing; only the gradient decides.
          if (flat ? trial_grad.norm() < gnorm : trial_value < value) {
            theta = std::move(trial);
            value = trial_value;
            grad = std::move(trial_grad);
            accepted = true;
            break;
          }
        }
      }
      step *= 0.5;
    }
    if (!accepted) return {theta, gnorm, it, false};
    step *= 2.0;
  }
  const double gnorm = gpo_gradient(f, beta, data, theta, ref).norm();
  return {theta, gnorm, max_iters, gnorm < tol};
}

/// CSV with header `step,gpo_loss,kl,mu_sq[,extra...]`, extra columns sorted by name.
inline std::string trace_to_csv(const Trace& trace) {
  if (trace.empty()) throw EmptyOutputError("cannot render an empty trace");
  std::set<std::string> extra_names;
  for (const auto& rec : trace) {
    for (const auto& [name, value] : rec.extra) extra_names.insert(name);
  }
  std::string out = "step,gpo_loss,kl,mu_sq";
  for (const auto& name : extra_names) out += ',' + name;
  out += '\n';
  for (const auto& rec : trace) {
    out += std::to_string(rec.step) + ',' + format_double(rec.gpo_loss) + ',' +
           format_double(rec.kl) + ',' + format_double(rec.mu_sq);
    for (const auto& name : extra_names) {
      out += ',';
      const auto it = rec.extra.find(name);
      if (it != rec.extra.end()) out += format_double(it->second);
    }
    out += '\n';
  }
  return out;
}

/// Inverse of trace_to_csv.
inline Trace parse_trace_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty trace CSV");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 4 || header[0] != "step" || header[1] != "gpo_loss" || header[2] != "kl" ||
      header[3] != "mu_sq") {
    throw ConfigError("trace CSV header must start with step,gpo_loss,kl,mu_sq");
  }
  Trace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != header.size()) throw ConfigError("ragged trace CSV row: " + line);
    TraceRecord rec;
    rec.step = static_cast<std::size_t>(std::stoull(cells[0]));
    rec.gpo_loss = parse_double(cells[1]);
    rec.kl = parse_double(cells[2]);
    rec.mu_sq = parse_double(cells[3]);
    for (std::size_t i = 4; i < cells.size(); ++i) {
      if (!cells[i].empty()) rec.extra[header[i]] = parse_double(cells[i]);
    }
    trace.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace gpo
