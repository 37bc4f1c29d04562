#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gpo/gaussian.hpp"
#include "gpo/loss.hpp"
#include "gpo/numeric.hpp"
#include "gpo/policy.hpp"
#include "gpo/reward.hpp"
#include "gpo/rng.hpp"
#include "gpo/trainer.hpp"

// Runtime self-checks of the library's invariants, reported as a pass/fail table.

namespace gpo {

struct CheckResult {
  std::string name;
  bool passed;
  std::string detail;
};

namespace detail {

inline double central_difference(const std::function<double(double)>& g, double x, double h) {
  return (g(x + h) - g(x - h)) / (2.0 * h);
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline SoftmaxPolicy random_policy(Rng& rng, std::size_t contexts, std::size_t actions, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Logits logits(static_cast<Eigen::Index>(contexts), static_cast<Eigen::Index>(actions));
  for (Eigen::Index c = 0; c < logits.rows(); ++c) {
    for (Eigen::Index a = 0; a < logits.cols(); ++a) logits(c, a) = normal(rng);
  }
  return SoftmaxPolicy(std::move(logits));
}

inline PreferenceDataset random_dataset(Rng& rng, std::size_t contexts, std::size_t actions,
                                        std::size_t size) {
  std::uniform_int_distribution<std::size_t> ctx(0, contexts - 1);
  std::uniform_int_distribution<std::size_t> act(0, actions - 1);
  std::vector<PreferencePair> pairs;
  std::vector<double> weights;
  for (std::size_t k = 0; k < size; ++k) {
    const std::size_t c = ctx(rng);
    const std::size_t w = act(rng);
    std::size_t l = act(rng);
    while (l == w) l = act(rng);
    pairs.push_back({c, w, l});
    weights.push_back(0.1 + uniform01(rng));
  }
  return PreferenceDataset::normalized(std::move(pairs), std::move(weights));
}

inline Eigen::VectorXd random_distribution(Rng& rng, std::size_t n) {
  Eigen::VectorXd mu(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) = 0.2 + uniform01(rng);
  return mu / mu.sum();
}

}  // namespace detail

inline std::vector<CheckResult> check_losses() {
  std::vector<CheckResult> out;
  const std::vector<std::pair<std::string, double>> f0 = {
      {"logistic", std::log(2.0)}, {"hinge", 1.0}, {"squared", 1.0},
      {"exponential", 1.0},        {"truncated_quadratic", 1.0}, {"savage", 0.25}};
  for (const auto& [name, expected] : f0) {
    const ConvexLoss f = make_loss(name);
    const double got = f.value(0.0);
    out.push_back({"losses/" + name + "/f0", got == expected, "f(0) = " + format_double(got)});

    const AdmissibilityReport adm = check_admissible(f);
    if (name == "savage") {
      // Nonconvex on the far left of the margin axis; everything else must hold.
      bool left_only = adm.nonnegative && adm.decreasing_at_zero;
      for (double x : adm.violations) left_only = left_only && x < 0.0;
      out.push_back({"losses/savage/admissibility", left_only,
                     std::to_string(adm.violation_count) + " convexity violations, all at x < 0"});
    } else {
      out.push_back({"losses/" + name + "/admissibility", adm.admissible(),
                     std::to_string(adm.violation_count) + " violations"});
    }

    double worst = 0.0;
    for (double x : check_grid(81, -4.0, 4.0)) {
      const bool near_kink = std::any_of(f.kinks.begin(), f.kinks.end(),
                                         [&](double k) { return std::abs(x - k) < 1e-3; });
      if (near_kink) continue;
      worst = std::max(worst, detail::rel_error(f.first_deriv(x), detail::central_difference(f.value, x, 1e-5)));
      // Skip f'' comparisons across a jump of f'' (truncated quadratic at x = 1).
      const bool fpp_jump = f.second_deriv && std::abs(f.second_deriv(x - 1e-3) - f.second_deriv(x + 1e-3)) > 0.5;
      if (f.second_deriv && !fpp_jump) {
        worst = std::max(worst, detail::rel_error(f.second_deriv(x),
                                                  detail::central_difference(f.first_deriv, x, 1e-5)));
      }
    }
    out.push_back({"losses/" + name + "/derivatives", worst < 1e-5, "max rel error " + format_double(worst)});
  }
  return out;
}

inline std::vector<CheckResult> check_policy(std::uint64_t seed = 0, std::size_t instances = 20) {
  std::vector<CheckResult> out;
  Rng rng = named_stream(seed, "check/policy");
  for (const auto& name : builtin_loss_names()) {
    const ConvexLoss f = make_loss(name);
    double worst = 0.0;
    for (std::size_t k = 0; k < instances; ++k) {
      const SoftmaxPolicy ref = detail::random_policy(rng, 3, 5, 1.0);
      SoftmaxPolicy theta = detail::random_policy(rng, 3, 5, 1.0);
      const PreferenceDataset data = detail::random_dataset(rng, 3, 5, 12);
      const double beta = 0.5 + uniform01(rng);
      const Logits grad = gpo_gradient(f, beta, data, theta, ref);
      for (Eigen::Index c = 0; c < grad.rows(); ++c) {
        for (Eigen::Index a = 0; a < grad.cols(); ++a) {
          const double h = 1e-6;
          SoftmaxPolicy up = theta;
          SoftmaxPolicy down = theta;
          up.mutable_logits()(c, a) += h;
          down.mutable_logits()(c, a) -= h;
          const double fd = (gpo_loss(f, beta, data, up, ref) - gpo_loss(f, beta, data, down, ref)) / (2 * h);
          worst = std::max(worst, detail::rel_error(grad(c, a), fd));
        }
      }
    }
    out.push_back({"policy/" + name + "/gradient", worst < 1e-5, "max rel error " + format_double(worst)});
  }

  double kl_gap = 0.0;
  double score = 0.0;
  double variance_gap = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t actions = 2 + k % 19;
    const SoftmaxPolicy ref = detail::random_policy(rng, 1, actions, 1.0);
    const SoftmaxPolicy theta = detail::random_policy(rng, 1, actions, 1.0);
    kl_gap = std::max(kl_gap, (on_policy_squared_gradient(theta, ref, 0) - kl_gradient(theta, ref, 0))
                                  .cwiseAbs().maxCoeff());
    score = std::max(score, score_function_term(theta, 0).cwiseAbs().maxCoeff());
    const VarianceIdentity v = variance_identity_check(theta, ref, 0);
    variance_gap = std::max(variance_gap, std::abs(v.lhs - v.rhs));
  }
  out.push_back({"policy/kl_gradient_identity", kl_gap < 1e-10, "max abs gap " + format_double(kl_gap)});
  out.push_back({"policy/score_function_zero", score < 1e-12, "max abs " + format_double(score)});
  out.push_back({"policy/variance_identity", variance_gap < 1e-10, "max abs gap " + format_double(variance_gap)});
  return out;
}

inline std::vector<CheckResult> check_trainer() {
  std::vector<CheckResult> out;
  const PreferenceDataset data = PreferenceDataset::uniform({{0, 0, 1}, {0, 1, 2}, {0, 0, 2}});
  const SoftmaxPolicy ref(1, 3);
  TrainConfig config;
  config.loss = "squared";
  config.steps = 10;
  config.eval_every = 5;
  const TrainResult a = train(config, data, ref, ref);
  const TrainResult b = train(config, data, ref, ref);
  out.push_back({"trainer/deterministic", a.trace == b.trace, std::to_string(a.trace.size()) + " records"});
  const TraceRecord& first = a.trace.front();
  out.push_back({"trainer/initial_record", first.kl == 0.0 && first.mu_sq == 0.0 && first.gpo_loss == 1.0,
                 "gpo_loss " + format_double(first.gpo_loss)});
  config.learning_rate = 0.0;
  const TrainResult frozen = train(config, data, ref, ref);
  out.push_back({"trainer/zero_step", frozen.final_policy.logits() == ref.logits(), "lr = 0"});
  return out;
}

/// Sign of the 1-D minimizer against sign(2p - 1) for every smooth loss; logistic against logit(p).
inline std::vector<CheckResult> check_bayes(std::size_t samples = 100) {
  std::vector<CheckResult> out;
  for (const auto& name : builtin_loss_names()) {
    const ConvexLoss f = make_loss(name);
    if (!f.smooth) continue;
    std::size_t wrong = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
      const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(samples);
      const double t = pairwise_bayes_minimizer(f, p);
      const double expected = p > 0.5 ? 1.0 : (p < 0.5 ? -1.0 : 0.0);
      const double sign = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
      wrong += sign != expected;
      if (name == "logistic") worst = std::max(worst, std::abs(t - std::log(p / (1.0 - p))));
    }
    std::string detail = std::to_string(wrong) + " sign mismatches";
    bool passed = wrong == 0;
    if (name == "logistic") {
      detail += ", max |t - logit(p)| " + format_double(worst);
      passed = passed && worst < 1e-6;
    }
    out.push_back({"rewards/bayes/" + name, passed, detail});
  }
  return out;
}

/// Logistic fit on Bradley-Terry preferences recovers the generating rewards up to a shift.
inline std::vector<CheckResult> check_bt(std::uint64_t seed = 0, std::size_t instances = 10) {
  Rng rng = named_stream(seed, "check/bt");
  std::normal_distribution<double> normal(0.0, 1.0);
  const ConvexLoss f = make_loss("logistic");
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t n = 3 + k % 5;
    RewardVector r_star(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < r_star.size(); ++i) r_star(i) = normal(rng);
    const Eigen::VectorXd mu = detail::random_distribution(rng, n);
    RewardFitOptions opts;
    opts.tol = 1e-12;
    const RewardVector fit = fit_pointwise_reward(f, bt_preferences(r_star), mu, opts);
    const RewardVector diff = (fit.array() - fit(0)) - (r_star.array() - r_star(0));
    worst = std::max(worst, diff.cwiseAbs().maxCoeff());
  }
  return {{"rewards/bt/logistic_recovery", worst < 1e-4, "max abs error " + format_double(worst)}};
}

/// Minimizing the offline loss lands on ref * exp(r_f / beta), r_f the pointwise reward fit.
inline std::vector<CheckResult> check_equivalence(std::uint64_t seed = 0, std::size_t instances = 5) {
  std::vector<CheckResult> out;
  Rng rng = named_stream(seed, "check/equivalence");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& name : builtin_loss_names()) {
    const ConvexLoss f = make_loss(name);
    if (!f.smooth) continue;
    double worst = 0.0;
    for (std::size_t k = 0; k < instances; ++k) {
      RewardVector r_star(3);
      for (Eigen::Index i = 0; i < 3; ++i) r_star(i) = normal(rng);
      const PreferenceMatrix prefs = bt_preferences(r_star);
      const Eigen::VectorXd mu = detail::random_distribution(rng, 3);
      const SoftmaxPolicy ref = detail::random_policy(rng, 1, 3, 0.5);
      const double beta = 0.5 + uniform01(rng);
      RewardFitOptions opts;
      opts.tol = 1e-12;
      const RewardVector r_fit = fit_pointwise_reward(f, prefs, mu, opts);
      const Eigen::VectorXd expected = regularized_optimal_policy(ref.probs(0), r_fit, beta);
      const MinimizeResult min = minimize_gpo_loss(f, beta, pairwise_dataset(prefs, mu), ref, ref, 1e-11);
      worst = std::max(worst, (min.policy.probs(0) - expected).cwiseAbs().maxCoeff());
    }
    out.push_back({"rewards/equivalence/" + name, worst < 1e-4, "max prob gap " + format_double(worst)});
  }
  return out;
}

inline std::vector<CheckResult> check_gaussians() {
  const GaussianMixture ref = reference_mixture();
  const GaussianMixture mu = behavior_mixture(kCounterexampleSeed);
  const std::vector<ScanRow> rows = scan_shift(ref, mu, uniform_grid(5), 200, 0);
  const ScanRow& origin = rows[2];
  bool nonnegative = true;
  for (const auto& r : rows) nonnegative = nonnegative && r.mu_sq >= 0.0;
  return {{"gaussians/zero_at_origin", origin.c == 0.0 && origin.kl == 0.0 && origin.mu_sq == 0.0,
           "kl " + format_double(origin.kl) + ", mu_sq " + format_double(origin.mu_sq)},
          {"gaussians/mu_sq_nonnegative", nonnegative, "5-point scan"}};
}

inline std::vector<CheckResult> check_rewards(const std::string& which) {
  if (which == "bayes") return check_bayes();
  if (which == "bt") return check_bt();
  if (which == "equivalence") return check_equivalence();
  throw ConfigError("unknown reward check '" + which + "' (expected bayes, bt or equivalence)");
}

inline std::vector<CheckResult> run_all_checks() {
  std::vector<CheckResult> all;
  for (auto part : {check_losses(), check_policy(), check_trainer(), check_bayes(), check_bt(),
                    check_equivalence(), check_gaussians()}) {
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

inline std::string check_table(const std::vector<CheckResult>& results) {
  std::string out;
  for (const auto& r : results) out += (r.passed ? "PASS  " : "FAIL  ") + r.name + "  " + r.detail + '\n';
  return out;
}

}  // namespace gpo
