#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gpo/errors.hpp"
#include "gpo/loss.hpp"
#include "gpo/numeric.hpp"
#include "gpo/policy.hpp"

// Reward modeling as binary classification over response pairs.

namespace gpo {

/// p(i, j) = probability that response i is preferred to response j.
/// Complementary off the diagonal; the diagonal is fixed at 0.5.
class PreferenceMatrix {
 public:
  explicit PreferenceMatrix(Eigen::MatrixXd p) : p_(std::move(p)) {
    if (p_.rows() != p_.cols() || p_.rows() < 2) {
      throw DimensionError("preference matrix must be square with n >= 2");
    }
    for (Eigen::Index i = 0; i < p_.rows(); ++i) {
      p_(i, i) = 0.5;
      for (Eigen::Index j = 0; j < p_.cols(); ++j) {
        if (!(p_(i, j) >= 0.0 && p_(i, j) <= 1.0)) {
          throw ConfigError("preference probabilities must lie in [0, 1]");
        }
        if (i != j && std::abs(p_(i, j) + p_(j, i) - 1.0) > 1e-12) {
          throw ConfigError("p(i,j) + p(j,i) must equal 1");
        }
      }
    }
  }

  std::size_t size() const { return static_cast<std::size_t>(p_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return p_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& matrix() const { return p_; }

 private:
  Eigen::MatrixXd p_;
};

using RewardVector = Eigen::VectorXd;

inline void require_distribution(const Eigen::VectorXd& mu, std::size_t n) {
  if (static_cast<std::size_t>(mu.size()) != n) {
    throw DimensionError("distribution has " + std::to_string(mu.size()) + " entries, expected " +
                         std::to_string(n));
  }
  if ((mu.array() < 0.0).any() || std::abs(mu.sum() - 1.0) > 1e-12) {
    throw ConfigError("distribution must be nonnegative and sum to 1");
  }
}

/// Bradley-Terry preferences p(i, j) = sigmoid(r[i] - r[j]).
inline PreferenceMatrix bt_preferences(const RewardVector& r_star) {
  if (!r_star.allFinite()) throw NumericError("rewards must be finite");
  const Eigen::Index n = r_star.size();
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      // Set the upper triangle, mirror the lower one so complementarity is exact.
      p(i, j) = i == j ? 0.5 : (i < j ? sigmoid(r_star(i) - r_star(j)) : 1.0 - p(j, i));
    }
  }
  return PreferenceMatrix(std::move(p));
}

/// sum_{i,j} mu_i mu_j [p(i,j) f(r_i - r_j) + p(j,i) f(r_j - r_i)].
inline double reward_loss(const ConvexLoss& f, const RewardVector& r,
                          const PreferenceMatrix& prefs, const Eigen::VectorXd& mu) {
  const std::size_t n = prefs.size();
  require_distribution(mu, n);
  if (static_cast<std::size_t>(r.size()) != n) throw DimensionError("reward vector size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = r(static_cast<Eigen::Index>(i)) - r(static_cast<Eigen::Index>(j));
      total += mu(static_cast<Eigen::Index>(i)) * mu(static_cast<Eigen::Index>(j)) *
               (prefs(i, j) * f.value(d) + prefs(j, i) * f.value(-d));
    }
  }
  return total;
}

/// d reward_loss / d r_k = 2 mu_k sum_j mu_j [p(k,j) f'(r_k - r_j) - p(j,k) f'(r_j - r_k)].
inline Eigen::VectorXd reward_loss_gradient(const ConvexLoss& f, const RewardVector& r,
                                            const PreferenceMatrix& prefs,
                                            const Eigen::VectorXd& mu) {
  const auto n = static_cast<Eigen::Index>(prefs.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = r(k) - r(j);
      const auto ku = static_cast<std::size_t>(k);
      const auto ju = static_cast<std::size_t>(j);
      acc += mu(j) * (prefs(ku, ju) * f.first_deriv(d) - prefs(ju, ku) * f.first_deriv(-d));
    }
    grad(k) = 2.0 * mu(k) * acc;
  }
  return grad;
}

struct RewardFitOptions {
  double tol = 1e-8;
  std::size_t max_iters = 1000000;
  /// Largest |r| before the objective is declared unbounded.
  double divergence_bound = 1e4;
};

namespace detail {

/// Hessian of reward_loss with row and column 0 removed (the gauge r[0] = 0).
inline Eigen::MatrixXd reduced_reward_hessian(const ConvexLoss& f, const RewardVector& r,
                                              const PreferenceMatrix& prefs, const Eigen::VectorXd& mu) {
  const auto n = static_cast<Eigen::Index>(prefs.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = r(i) - r(j);
      const auto iu = static_cast<std::size_t>(i);
      const auto ju = static_cast<std::size_t>(j);
      const double w = mu(i) * mu(j) * (prefs(iu, ju) * f.second_deriv(d) + prefs(ju, iu) * f.second_deriv(-d));
      h(i, i) += w;
      h(j, j) += w;
      h(i, j) -= w;
      h(j, i) -= w;
    }
  }
  return h.bottomRightCorner(n - 1, n - 1);
}

// True when every response in mu's support reaches every other one through
// "beats with positive probability" edges.
inline bool preferences_strongly_connected(const PreferenceMatrix& prefs, const Eigen::VectorXd& mu) {
  const std::size_t n = prefs.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      reach[i][j] = i == j || prefs(i, j) > 0.0;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!(mu(static_cast<Eigen::Index>(k)) > 0.0)) continue;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(mu(static_cast<Eigen::Index>(i)) > 0.0)) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (mu(static_cast<Eigen::Index>(j)) > 0.0 && !reach[i][j]) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Minimizes reward_loss over r with r[0] = 0 fixed and returns r with projected
/// gradient norm below `tol`. Losses with a second derivative take damped Newton
/// steps; hinge falls back to gradient descent with step doubling. Separable data
/// under a strictly decreasing loss has no finite minimizer and raises
/// UnboundedObjectiveError, as does any iterate leaving the divergence bound.
inline RewardVector fit_pointwise_reward(const ConvexLoss& f, const PreferenceMatrix& prefs,
                                         const Eigen::VectorXd& mu,
                                         const RewardFitOptions& options = {}) {
  if (!(options.tol > 0.0)) throw ConfigError("tolerance must be positive");
  require_distribution(mu, prefs.size());
  // If the support splits into groups where one never loses to another, raising
  // the winning group lowers every term of a strictly decreasing loss.
  if (strictly_decreasing(f) && !detail::preferences_strongly_connected(prefs, mu)) {
    throw UnboundedObjectiveError("reward loss '" + f.name +
                                  "' has no finite minimizer on these preferences");
  }
  const auto n = static_cast<Eigen::Index>(prefs.size());
  const bool newton = static_cast<bool>(f.second_deriv);
  const auto projected_gradient = [&](const RewardVector& x) {
    Eigen::VectorXd g = reward_loss_gradient(f, x, prefs, mu);
    g(0) = 0.0;
    return g;
  };

  RewardVector r = RewardVector::Zero(n);
  double value = reward_loss(f, r, prefs, mu);
  Eigen::VectorXd grad = projected_gradient(r);
  double gd_step = 1.0;
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    const double gnorm = grad.norm();
    if (gnorm < options.tol) return r;

    Eigen::VectorXd dir = -grad;
    double step = gd_step;
    bool newton_step = false;
    if (newton) {
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(detail::reduced_reward_hessian(f, r, prefs, mu));
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        Eigen::VectorXd sub = ldlt.solve(-grad.tail(n - 1));
        if (sub.allFinite() && sub.dot(grad.tail(n - 1)) < 0.0) {
          dir.tail(n - 1) = sub;
          step = 1.0;
          newton_step = true;
        }
      }
    }

    // Armijo on the value; inside the rounding band of the value only a strict
    // decrease of the gradient norm counts.
    const double slope = grad.dot(dir);
    bool accepted = false;
    while (step > 1e-300) {
      const RewardVector trial = r + step * dir;
      const double trial_value = reward_loss(f, trial, prefs, mu);
      const bool sufficient = trial_value <= value + 1e-4 * step * slope;
      const bool flat = std::abs(trial_value - value) <= 1e-14 * std::max(1.0, std::abs(value));
      Eigen::VectorXd trial_grad;
      if (sufficient || flat) trial_grad = projected_gradient(trial);
      if (flat ? trial_grad.norm() < gnorm : sufficient && trial_value < value) {
        r = trial;
        value = trial_value;
        grad = std::move(trial_grad);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      throw NumericError("reward fit stalled at gradient norm " + format_double(gnorm));
    }
    if (r.cwiseAbs().maxCoeff() > options.divergence_bound) {
      throw UnboundedObjectiveError("reward loss '" + f.name +
                                    "' has no finite minimizer on these preferences");
    }
    if (!newton_step) gd_step = step * 2.0;
  }
  throw NumericError("reward fit did not converge within the iteration limit");
}

/// p(y_i > mu) = sum_j mu_j p(i, j), counting the 0.5 diagonal.
inline Eigen::VectorXd p_succ_mu(const PreferenceMatrix& prefs, const Eigen::VectorXd& mu) {
  require_distribution(mu, prefs.size());
  return prefs.matrix() * mu;
}

/// The t minimizing p f(t) + (1 - p) f(-t). Returns +/-infinity when the objective
/// keeps decreasing out to |t| = 1e6.
inline double pairwise_bayes_minimizer(const ConvexLoss& f, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probability must lie in [0, 1]");
  if (!f.smooth) throw NotApplicableError("Bayes minimizer needs a smooth loss");
  // h'(t) = p f'(t) - (1 - p) f'(-t); one sign change for admissible f.
  const auto slope = [&](double t) { return p * f.first_deriv(t) - (1.0 - p) * f.first_deriv(-t); };
  const double s0 = slope(0.0);
  if (s0 == 0.0) return 0.0;
  const double dir = s0 < 0.0 ? 1.0 : -1.0;
  constexpr double kLimit = 1e6;
  double lo = 0.0;
  double hi = 1.0;
  while (!(dir * slope(dir * hi) > 0.0)) {
    lo = hi;
    hi *= 2.0;
    if (hi > kLimit) return dir * std::numeric_limits<double>::infinity();
  }
  for (int iter = 0; iter < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (dir * slope(dir * mid) > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return dir * 0.5 * (lo + hi);
}

/// Preference data induced by (prefs, mu): ordered pair (i, j), i != j, with
/// weight proportional to mu_i mu_j p(i, j), single context. Self-pairs only
/// add a constant and are dropped.
inline PreferenceDataset pairwise_dataset(const PreferenceMatrix& prefs, const Eigen::VectorXd& mu) {
  require_distribution(mu, prefs.size());
  std::vector<PreferencePair> pairs;
  std::vector<double> weights;
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    for (std::size_t j = 0; j < prefs.size(); ++j) {
      if (i == j) continue;
      pairs.push_back({0, i, j});
      weights.push_back(mu(static_cast<Eigen::Index>(i)) * mu(static_cast<Eigen::Index>(j)) *
                        prefs(i, j));
    }
  }
  return PreferenceDataset::normalized(std::move(pairs), std::move(weights));
}

/// pi(y) proportional to ref(y) exp(r(y) / beta): the KL-regularized optimum for reward r.
inline Eigen::VectorXd regularized_optimal_policy(const Eigen::VectorXd& ref_probs,
                                                  const RewardVector& r, double beta) {
  Eigen::VectorXd logits = ref_probs.array().log() + r.array() / beta;
  const double hi = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - hi).exp();
  return p / p.sum();
}

}  // namespace gpo
