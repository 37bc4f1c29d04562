#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gpo/errors.hpp"
#include "gpo/loss.hpp"

namespace gpo {

using Logits = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Tabular categorical policy: one softmax over `actions` responses per context.
/// Logits that differ by a per-context constant describe the same policy.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(std::size_t contexts, std::size_t actions)
      : SoftmaxPolicy(Logits::Zero(static_cast<Eigen::Index>(contexts),
                                   static_cast<Eigen::Index>(actions))) {}

  explicit SoftmaxPolicy(Logits logits) : logits_(std::move(logits)) {
    if (logits_.rows() < 1) throw ConfigError("policy needs at least one context");
    if (logits_.cols() < 2) throw ConfigError("policy needs at least two actions");
  }

  std::size_t contexts() const { return static_cast<std::size_t>(logits_.rows()); }
  std::size_t actions() const { return static_cast<std::size_t>(logits_.cols()); }

  const Logits& logits() const { return logits_; }
  Logits& mutable_logits() { return logits_; }

  /// log softmax of one context, max-shifted for stability.
  Vector log_probs(std::size_t context) const {
    const auto row = logits_.row(static_cast<Eigen::Index>(context));
    const double hi = row.maxCoeff();
    const auto shifted = (row.array() - hi).eval();
    return (shifted - std::log(shifted.exp().sum())).transpose();
  }

  Vector probs(std::size_t context) const { return log_probs(context).array().exp(); }

  bool same_shape(const SoftmaxPolicy& other) const {
    return contexts() == other.contexts() && actions() == other.actions();
  }

 private:
  Logits logits_;
};

struct PreferencePair {
  std::size_t context = 0;
  std::size_t winner = 0;
  std::size_t loser = 0;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// Weighted (winner, loser) pairs; the weights are the sampling distribution mu over pairs.
class PreferenceDataset {
 public:
  PreferenceDataset() = default;

  PreferenceDataset(std::vector<PreferencePair> pairs, std::vector<double> weights)
      : pairs_(std::move(pairs)), weights_(std::move(weights)) {
    if (pairs_.empty()) throw ConfigError("dataset has no pairs");
    if (pairs_.size() != weights_.size()) {
      throw DimensionError("dataset has " + std::to_string(pairs_.size()) + " pairs but " +
                           std::to_string(weights_.size()) + " weights");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      if (pairs_[i].winner == pairs_[i].loser) {
        throw ConfigError("pair " + std::to_string(i) + " has winner == loser");
      }
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
        throw ConfigError("pair " + std::to_string(i) + " has an invalid weight");
      }
      total += weights_[i];
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ConfigError("dataset weights sum to " + format_double(total) + ", expected 1");
    }
  }

  /// Equal weight on every pair (the finite-sample representation).
  static PreferenceDataset uniform(std::vector<PreferencePair> pairs) {
    const std::size_t n = pairs.size();
    return PreferenceDataset(std::move(pairs),
                             std::vector<double>(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n)));
  }

  /// Renormalizes arbitrary nonnegative weights; zero-weight pairs are kept.
  static PreferenceDataset normalized(std::vector<PreferencePair> pairs,
                                      std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw ConfigError("dataset weights sum to zero");
    for (double& w : weights) w /= total;
    // Absorb the rounding residue so the sum is 1 within the invariant's tolerance.
    double residue = 1.0;
    for (double w : weights) residue -= w;
    if (!weights.empty()) weights.front() += residue;
    return PreferenceDataset(std::move(pairs), std::move(weights));
  }

  const std::vector<PreferencePair>& pairs() const { return pairs_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return pairs_.size(); }

  void validate_against(const SoftmaxPolicy& policy) const {
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      const auto& p = pairs_[i];
      if (p.context >= policy.contexts() || p.winner >= policy.actions() ||
          p.loser >= policy.actions()) {
        throw DimensionError("pair " + std::to_string(i) + " references an index outside the " +
                             std::to_string(policy.contexts()) + "x" +
                             std::to_string(policy.actions()) + " policy");
      }
    }
  }

 private:
  std::vector<PreferencePair> pairs_;
  std::vector<double> weights_;
};

namespace detail {

inline void require_same_shape(const SoftmaxPolicy& theta, const SoftmaxPolicy& ref) {
  if (!theta.same_shape(ref)) {
    throw DimensionError("policy shapes differ: " + std::to_string(theta.contexts()) + "x" +
                         std::to_string(theta.actions()) + " vs " +
                         std::to_string(ref.contexts()) + "x" + std::to_string(ref.actions()));
  }
}

inline void require_finite(const SoftmaxPolicy& policy) {
  for (Eigen::Index c = 0; c < policy.logits().rows(); ++c) {
    if (!policy.logits().row(c).allFinite()) {
      throw NumericError("non-finite logits in context " + std::to_string(c));
    }
  }
}

inline void require_context(const SoftmaxPolicy& policy, std::size_t context) {
  if (context >= policy.contexts()) {
    throw DimensionError("context " + std::to_string(context) + " out of range");
  }
}

inline void require_consistent(const PreferenceDataset& data, const SoftmaxPolicy& theta,
                               const SoftmaxPolicy& ref) {
  require_same_shape(theta, ref);
  data.validate_against(theta);
}

}  // namespace detail

/// rho = log pi(w)/ref(w) - log pi(l)/ref(l). The per-context normalizers cancel,
/// so this is the change in the winner-minus-loser logit gap.
inline double log_ratio_diff(const SoftmaxPolicy& theta, const SoftmaxPolicy& ref,
                             const PreferencePair& pair) {
  detail::require_same_shape(theta, ref);
  const auto c = static_cast<Eigen::Index>(pair.context);
  const auto w = static_cast<Eigen::Index>(pair.winner);
  const auto l = static_cast<Eigen::Index>(pair.loser);
  const double gap = theta.logits()(c, w) - theta.logits()(c, l);
  const double ref_gap = ref.logits()(c, w) - ref.logits()(c, l);
  return gap - ref_gap;
}

/// Largest rho over all pairs of the dataset.
inline double max_log_ratio_diff(const PreferenceDataset& data, const SoftmaxPolicy& theta,
                                 const SoftmaxPolicy& ref) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& p : data.pairs()) hi = std::max(hi, log_ratio_diff(theta, ref, p));
  return hi;
}

/// E_mu[f(beta * rho)].
inline double gpo_loss(const ConvexLoss& f, double beta, const PreferenceDataset& data,
                       const SoftmaxPolicy& theta, const SoftmaxPolicy& ref) {
  detail::require_consistent(data, theta, ref);
  detail::require_finite(theta);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += data.weights()[i] * f.value(beta * log_ratio_diff(theta, ref, data.pairs()[i]));
  }
  return total;
}

/// Exact gradient of gpo_loss with respect to theta's logits. The softmax
/// normalizer terms cancel in rho, so d rho / d logits = e_winner - e_loser.
inline Logits gpo_gradient(const ConvexLoss& f, double beta, const PreferenceDataset& data,
                           const SoftmaxPolicy& theta, const SoftmaxPolicy& ref) {
  detail::require_consistent(data, theta, ref);
  detail::require_finite(theta);
  Logits grad = Logits::Zero(theta.logits().rows(), theta.logits().cols());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data.pairs()[i];
    const double rho = log_ratio_diff(theta, ref, p);
    const double coeff = data.weights()[i] * f.first_deriv(beta * rho) * beta;
    const auto c = static_cast<Eigen::Index>(p.context);
    grad(c, static_cast<Eigen::Index>(p.winner)) += coeff;
    grad(c, static_cast<Eigen::Index>(p.loser)) -= coeff;
  }
  return grad;
}

/// KL(theta || ref) in one context, summed exactly over the action set.
inline double kl_divergence(const SoftmaxPolicy& theta, const SoftmaxPolicy& ref,
                            std::size_t context) {
  detail::require_same_shape(theta, ref);
  detail::require_context(theta, context);
  const Vector log_p = theta.log_probs(context);
  const Vector log_q = ref.log_probs(context);
  double kl = 0.0;
  for (Eigen::Index y = 0; y < log_p.size(); ++y) {
    kl += std::exp(log_p(y)) * (log_p(y) - log_q(y));
  }
  // Rounding can leave a tiny negative value when the distributions coincide.
  return std::max(kl, 0.0);
}

/// KL summed over contexts.
inline double total_kl(const SoftmaxPolicy& theta, const SoftmaxPolicy& ref) {
  double kl = 0.0;
  for (std::size_t c = 0; c < theta.contexts(); ++c) kl += kl_divergence(theta, ref, c);
  return kl;
}

/// d KL / d logits[context] = pi_k * (log pi_k/ref_k - KL).
inline Vector kl_gradient(const SoftmaxPolicy& theta, const SoftmaxPolicy& ref,
                          std::size_t context) {
  detail::require_same_shape(theta, ref);
  detail::require_context(theta, context);
  const Vector log_p = theta.log_probs(context);
  const Vector log_ratio = log_p - ref.log_probs(context);
  const Vector p = log_p.array().exp();
  const double kl = p.dot(log_ratio);
  return p.array() * (log_ratio.array() - kl);
}

/// E_mu[rho^2 / 2].
inline double mu_weighted_squared_loss(const PreferenceDataset& data, const SoftmaxPolicy& theta,
                                       const SoftmaxPolicy& ref) {
  detail::require_consistent(data, theta, ref);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double rho = log_ratio_diff(theta, ref, data.pairs()[i]);
    total += data.weights()[i] * 0.5 * rho * rho;
  }
  return total;
}

inline Logits mu_weighted_squared_gradient(const PreferenceDataset& data,
                                           const SoftmaxPolicy& theta, const SoftmaxPolicy& ref) {
  detail::require_consistent(data, theta, ref);
  Logits grad = Logits::Zero(theta.logits().rows(), theta.logits().cols());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data.pairs()[i];
    const double coeff = data.weights()[i] * log_ratio_diff(theta, ref, p);
    const auto c = static_cast<Eigen::Index>(p.context);
    grad(c, static_cast<Eigen::Index>(p.winner)) += coeff;
    grad(c, static_cast<Eigen::Index>(p.loser)) -= coeff;
  }
  return grad;
}

/// Gradient of E_{(y1,y2) ~ pi x pi}[rho^2 / 2] with the pi x pi weights held fixed,
/// by explicit double sum over ordered response pairs.
inline Vector on_policy_squared_gradient(const SoftmaxPolicy& theta, const SoftmaxPolicy& ref,
                                         std::size_t context) {
  detail::require_same_shape(theta, ref);
  detail::require_context(theta, context);
  const Vector p = theta.probs(context);
  const Vector log_ratio = theta.log_probs(context) - ref.log_probs(context);
  const Eigen::Index n = p.size();
  Vector grad = Vector::Zero(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double coeff = p(a) * p(b) * (log_ratio(a) - log_ratio(b));
      grad(a) += 0.5 * coeff;
      grad(b) -= 0.5 * coeff;
    }
  }
  return grad;
}

/// E_{y ~ pi}[grad log pi(y)]: the score-function term in the KL gradient.
/// Identically zero in exact arithmetic; computed explicitly for the identity check.
inline Vector score_function_term(const SoftmaxPolicy& theta, std::size_t context) {
  detail::require_context(theta, context);
  const Vector p = theta.probs(context);
  const Eigen::Index n = p.size();
  Vector term = Vector::Zero(n);
  for (Eigen::Index y = 0; y < n; ++y) {
    // grad log pi(y) = e_y - pi
    Vector score = -p;
    score(y) += 1.0;
    term += p(y) * score;
  }
  return term;
}

struct VarianceIdentity {
  double lhs;  // E_{pi x pi}[(L(y) - L(y'))^2] / 2
  double rhs;  // Var_pi[L(y)]
};

inline VarianceIdentity variance_identity_check(const SoftmaxPolicy& theta,
                                                const SoftmaxPolicy& ref, std::size_t context) {
  detail::require_same_shape(theta, ref);
  detail::require_context(theta, context);
  const Vector p = theta.probs(context);
  const Vector log_ratio = theta.log_probs(context) - ref.log_probs(context);
  const Eigen::Index n = p.size();
  double lhs = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double d = log_ratio(a) - log_ratio(b);
      lhs += p(a) * p(b) * d * d;
    }
  }
  lhs *= 0.5;
  const double mean = p.dot(log_ratio);
  double rhs = 0.0;
  for (Eigen::Index y = 0; y < n; ++y) {
    const double d = log_ratio(y) - mean;
    rhs += p(y) * d * d;
  }
  return {lhs, rhs};
}

}  // namespace gpo
