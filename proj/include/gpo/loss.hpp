#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpo/errors.hpp"
#include "gpo/numeric.hpp"

namespace gpo {

/// A convex surrogate f(x) of the 0-1 loss, evaluated at the margin x = beta * rho.
///
/// `first_deriv` is total on the reals; at kinks it returns the left derivative.
/// `second_deriv` is absent for losses without one; `kinks` lists points where
/// f is not twice differentiable and `smooth` is false when f itself has a kink.
struct ConvexLoss {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> first_deriv;
  std::function<double(double)> second_deriv;
  bool smooth = true;
  std::vector<double> kinks;
};

namespace detail {

// Clamp for arguments of exp() in the exponential loss.
inline constexpr double kExpClamp = 60.0;

inline double clamp_exp_arg(double x) {
  return std::clamp(x, -kExpClamp, kExpClamp);
}

inline ConvexLoss logistic_loss() {
  return {"logistic",
          [](double x) { return softplus(-x); },
          [](double x) { return -sigmoid(-x); },
          [](double x) { return sigmoid(x) * sigmoid(-x); },
          true,
          {}};
}

inline ConvexLoss hinge_loss() {
  return {"hinge",
          [](double x) { return std::max(0.0, 1.0 - x); },
          [](double x) { return x <= 1.0 ? -1.0 : 0.0; },
          [](double) { return 0.0; },
          false,
          {1.0}};
}

inline ConvexLoss squared_loss() {
  return {"squared",
          [](double x) { return (x - 1.0) * (x - 1.0); },
          [](double x) { return 2.0 * (x - 1.0); },
          [](double) { return 2.0; },
          true,
          {}};
}

inline ConvexLoss exponential_loss() {
  return {"exponential",
          [](double x) { return std::exp(-clamp_exp_arg(x)); },
          [](double x) { return -std::exp(-clamp_exp_arg(x)); },
          [](double x) { return std::exp(-clamp_exp_arg(x)); },
          true,
          {}};
}

// Continuously differentiable; f'' jumps from 2 to 0 at x = 1 and the
// left value is reported there.
inline ConvexLoss truncated_quadratic_loss() {
  return {"truncated_quadratic",
          [](double x) {
            const double m = std::max(0.0, 1.0 - x);
            return m * m;
          },
          [](double x) { return -2.0 * std::max(0.0, 1.0 - x); },
          [](double x) { return x <= 1.0 ? 2.0 : 0.0; },
          true,
          {}};
}

inline ConvexLoss savage_loss() {
  return {"savage",
          [](double x) {
            const double s = sigmoid(-x);
            return s * s;
          },
          [](double x) {
            const double s = sigmoid(-x);
            return -2.0 * s * s * sigmoid(x);
          },
          [](double x) {
            const double s = sigmoid(-x);
            const double t = sigmoid(x);
            return 4.0 * s * s * t * t - 2.0 * s * s * s * t;
          },
          true,
          {}};
}

}  // namespace detail

/// Canonical names of the six built-in losses, in table order.
inline const std::vector<std::string>& builtin_loss_names() {
  static const std::vector<std::string> names = {
      "logistic", "hinge", "squared", "exponential", "truncated_quadratic", "savage"};
  return names;
}

struct AdmissibilityReport {
  bool convex = true;
  bool nonnegative = true;
  bool decreasing_at_zero = true;
  double fp0 = 0.0;
  /// Grid points where convexity or nonnegativity failed (capped, see `violation_count`).
  std::vector<double> violations;
  std::size_t violation_count = 0;

  bool admissible() const { return convex && nonnegative && decreasing_at_zero; }
};

/// Grid shared by the convexity and derivative checks: 2001 points on [-10, 10].
inline std::vector<double> check_grid(std::size_t points = 2001, double lo = -10.0,
                                      double hi = 10.0) {
  std::vector<double> grid(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = lo + step * static_cast<double>(i);
  return grid;
}

inline AdmissibilityReport check_admissible(const ConvexLoss& f) {
  constexpr std::size_t kPoints = 2001;
  constexpr double kLo = -10.0;
  constexpr double kHi = 10.0;
  constexpr double kTol = 1e-12;
  constexpr std::size_t kMaxListed = 64;

  AdmissibilityReport report;
  auto note = [&](double x) {
    ++report.violation_count;
    if (report.violations.size() < kMaxListed &&
        std::find(report.violations.begin(), report.violations.end(), x) ==
            report.violations.end()) {
      report.violations.push_back(x);
    }
  };

  // Half-step grid so every midpoint of two coarse points is a sample.
  const std::size_t fine_points = 2 * kPoints - 1;
  const std::vector<double> fine = check_grid(fine_points, kLo, kHi);
  std::vector<double> values(fine_points);
  for (std::size_t i = 0; i < fine_points; ++i) {
    values[i] = f.value(fine[i]);
    if (!(values[i] >= 0.0)) {
      report.nonnegative = false;
      note(fine[i]);
    }
  }
  for (std::size_t a = 0; a < kPoints; ++a) {
    for (std::size_t b = a + 1; b < kPoints; ++b) {
      const double mid = values[a + b];
      if (mid > 0.5 * (values[2 * a] + values[2 * b]) + kTol) {
        report.convex = false;
        note(fine[a + b]);
      }
    }
  }
  report.fp0 = f.first_deriv(0.0);
  report.decreasing_at_zero = report.fp0 < 0.0;
  return report;
}

/// True when f' < 0 out to x = 50, so f has no finite minimizer on the scale any
/// fit can reach (convexity extends the sign to everything left of the probe).
inline bool strictly_decreasing(const ConvexLoss& f) { return f.first_deriv(50.0) < 0.0; }

inline double eval_deriv(const ConvexLoss& f, double x) { return f.first_deriv(x); }

inline double eval_second_deriv(const ConvexLoss& f, double x) {
  if (!f.second_deriv) {
    throw UndefinedResultError("loss '" + f.name + "' has no second derivative");
  }
  for (double k : f.kinks) {
    if (x == k) {
      throw UndefinedResultError("second derivative of '" + f.name +
                                 "' is undefined at its kink x = " + format_double(k));
    }
  }
  return f.second_deriv(x);
}

/// beta' = f''(0) * beta / |f'(0)|: the squared-loss regularizer matching f's
/// second-order expansion at rho = 0.
inline double taylor_equivalent_beta(const ConvexLoss& f, double beta) {
  if (!f.smooth || !f.second_deriv) {
    throw NotApplicableError("Taylor expansion does not apply to non-smooth loss '" + f.name +
                             "'");
  }
  const double fp0 = f.first_deriv(0.0);
  const double fpp0 = f.second_deriv(0.0);
  if (!(fp0 < 0.0) || !(fpp0 > 0.0)) {
    throw NotApplicableError("loss '" + f.name + "' needs f'(0) < 0 and f''(0) > 0");
  }
  return fpp0 * beta / std::abs(fp0);
}

/// Multiplier c such that grad E[f(beta rho)] ~= c * grad E[(beta' rho - 1)^2]
/// near rho = 0, namely f'(0)^2 / (2 f''(0)).
inline double taylor_gradient_scale(const ConvexLoss& f) {
  taylor_equivalent_beta(f, 1.0);
  const double fp0 = f.first_deriv(0.0);
  return fp0 * fp0 / (2.0 * f.second_deriv(0.0));
}

/// Name -> loss table. Starts with the six built-ins; user losses can be added
/// once they pass check_admissible.
class LossRegistry {
 public:
  LossRegistry() {
    for (auto&& loss : {detail::logistic_loss(), detail::hinge_loss(), detail::squared_loss(),
                        detail::exponential_loss(), detail::truncated_quadratic_loss(),
                        detail::savage_loss()}) {
      order_.push_back(loss.name);
      losses_.emplace(loss.name, loss);
    }
  }

  ConvexLoss get(const std::string& name) const {
    std::lock_guard lock(mutex_);
    const auto it = losses_.find(name);
    if (it == losses_.end()) {
      std::string valid;
      for (const auto& n : order_) valid += (valid.empty() ? "" : ", ") + n;
      throw ConfigError("unknown loss '" + name + "'; valid losses: " + valid);
    }
    return it->second;
  }

  bool contains(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return losses_.count(name) != 0;
  }

  void add(ConvexLoss loss) {
    const AdmissibilityReport report = check_admissible(loss);
    if (!report.admissible()) {
      throw ConfigError("loss '" + loss.name + "' is not admissible");
    }
    std::lock_guard lock(mutex_);
    if (losses_.count(loss.name) != 0) {
      throw ConfigError("loss '" + loss.name + "' is already registered");
    }
    order_.push_back(loss.name);
    losses_.emplace(loss.name, std::move(loss));
  }

  std::vector<std::string> names() const {
    std::lock_guard lock(mutex_);
    return order_;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ConvexLoss> losses_;
  std::vector<std::string> order_;
};

inline LossRegistry& loss_registry() {
  static LossRegistry registry;
  return registry;
}

inline ConvexLoss make_loss(const std::string& name) { return loss_registry().get(name); }

inline void register_loss(ConvexLoss loss) { loss_registry().add(std::move(loss)); }

/// One row of the loss table.
struct LossTableRow {
  std::string name;
  double f0;
  double fp0;
  std::optional<double> fpp0;
  std::optional<double> taylor_ratio;  // beta' / beta
};

inline LossTableRow loss_table_row(const ConvexLoss& f) {
  LossTableRow row{f.name, f.value(0.0), f.first_deriv(0.0), std::nullopt, std::nullopt};
  if (f.smooth && f.second_deriv) {
    row.fpp0 = f.second_deriv(0.0);
    if (*row.fpp0 > 0.0 && row.fp0 < 0.0) row.taylor_ratio = taylor_equivalent_beta(f, 1.0);
  } else if (f.second_deriv) {
    row.fpp0 = f.second_deriv(0.0);
  }
  return row;
}

/// CSV `name,f0,fp0,fpp0,taylor_ratio`; undefined cells are left empty.
inline std::string loss_table_csv(const std::vector<std::string>& names) {
  std::string out = "name,f0,fp0,fpp0,taylor_ratio\n";
  for (const auto& name : names) {
    const LossTableRow row = loss_table_row(make_loss(name));
    out += row.name + ',' + format_double(row.f0) + ',' + format_double(row.fp0) + ',' +
           (row.fpp0 ? format_double(*row.fpp0) : "") + ',' +
           (row.taylor_ratio ? format_double(*row.taylor_ratio) : "") + '\n';
  }
  return out;
}

}  // namespace gpo
