#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "gpo/loss.hpp"
#include "oracles.hpp"

using namespace gpo;

namespace {

bool near_kink(const ConvexLoss& f, double x, double radius) {
  for (double k : f.kinks) {
    if (std::abs(x - k) < radius) return true;
  }
  return false;
}

// f'' jumps at x = 1 for the truncated quadratic; FD across the jump is meaningless.
bool near_second_deriv_jump(const ConvexLoss& f, double x, double radius) {
  return f.name == "truncated_quadratic" && std::abs(x - 1.0) < radius;
}

}  // namespace

TEST(MakeLoss, ValueAtZeroMatchesClosedForms) {
  EXPECT_EQ(make_loss("logistic").value(0.0), std::log(2.0));
  EXPECT_EQ(make_loss("hinge").value(0.0), 1.0);
  EXPECT_EQ(make_loss("squared").value(0.0), 1.0);
  EXPECT_EQ(make_loss("exponential").value(0.0), 1.0);
  EXPECT_EQ(make_loss("truncated_quadratic").value(0.0), 1.0);
  EXPECT_EQ(make_loss("savage").value(0.0), 0.25);
}

TEST(MakeLoss, ValuesMatchFormulasOffZero) {
  oracle::Gen gen(11);
  for (int k = 0; k < 200; ++k) {
    const double x = gen.uniform(-8.0, 8.0);
    EXPECT_NEAR(make_loss("logistic").value(x), std::log1p(std::exp(-x)), 1e-13);
    EXPECT_DOUBLE_EQ(make_loss("hinge").value(x), std::max(0.0, 1.0 - x));
    EXPECT_DOUBLE_EQ(make_loss("squared").value(x), (x - 1.0) * (x - 1.0));
    EXPECT_NEAR(make_loss("exponential").value(x), std::exp(-x), 1e-12 * std::exp(-x));
    EXPECT_DOUBLE_EQ(make_loss("truncated_quadratic").value(x), std::pow(std::max(0.0, 1.0 - x), 2));
    EXPECT_NEAR(make_loss("savage").value(x), 1.0 / std::pow(1.0 + std::exp(x), 2), 1e-15);
  }
  EXPECT_EQ(make_loss("hinge").value(2.0), 0.0);
}

TEST(MakeLoss, UnknownNameListsValidNames) {
  try {
    make_loss("cross_entropy");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& name : builtin_loss_names()) EXPECT_NE(msg.find(name), std::string::npos) << name;
  }
}

TEST(EvalDeriv, SpotValues) {
  EXPECT_DOUBLE_EQ(eval_deriv(make_loss("logistic"), 0.0), -0.5);
  EXPECT_DOUBLE_EQ(eval_deriv(make_loss("squared"), 0.0), -2.0);
  EXPECT_DOUBLE_EQ(eval_deriv(make_loss("savage"), 0.0), -0.25);
  EXPECT_DOUBLE_EQ(eval_deriv(make_loss("hinge"), 1.0), -1.0);
  EXPECT_NEAR(eval_deriv(make_loss("logistic"), 0.0),
              oracle::central_diff(make_loss("logistic").value, 0.0), 1e-9);
}

TEST(EvalDeriv, MatchesFiniteDifferencesOnGrid) {
  for (const auto& name : builtin_loss_names()) {
    const ConvexLoss f = make_loss(name);
    for (double x : check_grid()) {
      if (near_kink(f, x, 1e-5)) continue;
      const double fd = oracle::central_diff(f.value, x, 1e-6);
      const double got = eval_deriv(f, x);
      EXPECT_LT(std::abs(got - fd) / std::max(1.0, std::abs(got)), 1e-5) << name << " at " << x;
    }
  }
}

TEST(EvalSecondDeriv, SpotValues) {
  EXPECT_DOUBLE_EQ(eval_second_deriv(make_loss("logistic"), 0.0), 0.25);
  EXPECT_DOUBLE_EQ(eval_second_deriv(make_loss("exponential"), 0.0), 1.0);
  EXPECT_DOUBLE_EQ(eval_second_deriv(make_loss("savage"), 0.0), 0.125);
  EXPECT_DOUBLE_EQ(eval_second_deriv(make_loss("squared"), 3.0), 2.0);
  EXPECT_DOUBLE_EQ(eval_second_deriv(make_loss("truncated_quadratic"), 1.0), 2.0);
  EXPECT_DOUBLE_EQ(eval_second_deriv(make_loss("truncated_quadratic"), 1.5), 0.0);
}

TEST(EvalSecondDeriv, MatchesSecondDifferences) {
  for (const auto& name : builtin_loss_names()) {
    const ConvexLoss f = make_loss(name);
    for (double x : check_grid(401, -6.0, 6.0)) {
      if (near_kink(f, x, 1e-3) || near_second_deriv_jump(f, x, 1e-3)) continue;
      const double fd = oracle::second_central_diff(f.value, x, 1e-4);
      EXPECT_NEAR(eval_second_deriv(f, x), fd, 1e-5 * std::max(1.0, std::abs(fd))) << name << " at " << x;
    }
  }
}

TEST(EvalSecondDeriv, HingeKinkIsUndefined) {
  EXPECT_THROW(eval_second_deriv(make_loss("hinge"), 1.0), UndefinedResultError);
  EXPECT_EQ(eval_second_deriv(make_loss("hinge"), 0.0), 0.0);
}

TEST(TaylorBeta, Examples) {
  EXPECT_EQ(taylor_equivalent_beta(make_loss("squared"), 1.0), 1.0);
  EXPECT_DOUBLE_EQ(taylor_equivalent_beta(make_loss("logistic"), 1.0), 0.5);
  EXPECT_DOUBLE_EQ(taylor_equivalent_beta(make_loss("exponential"), 3.0), 3.0);
  EXPECT_DOUBLE_EQ(taylor_equivalent_beta(make_loss("savage"), 2.0), 1.0);
  EXPECT_THROW(taylor_equivalent_beta(make_loss("hinge"), 1.0), NotApplicableError);
}

TEST(TaylorBeta, SquaredIsIdentityForAnyBeta) {
  oracle::Gen gen(3);
  const ConvexLoss f = make_loss("squared");
  for (int k = 0; k < 100; ++k) {
    const double beta = std::exp(gen.uniform(-8.0, 8.0));
    EXPECT_EQ(taylor_equivalent_beta(f, beta), beta);
  }
}

TEST(TaylorBeta, RatioUsesDerivativeOracles) {
  for (const std::string name : {"logistic", "exponential", "savage", "truncated_quadratic"}) {
    const ConvexLoss f = make_loss(name);
    const double fp = oracle::central_diff(f.value, 0.0, 1e-6);
    const double fpp = oracle::second_central_diff(f.value, 0.0, 1e-4);
    EXPECT_NEAR(taylor_equivalent_beta(f, 1.0), fpp / std::abs(fp), 1e-6) << name;
  }
}

TEST(TaylorGradientScale, LogisticIsOneHalf) {
  EXPECT_DOUBLE_EQ(taylor_gradient_scale(make_loss("logistic")), 0.5);
  EXPECT_DOUBLE_EQ(taylor_gradient_scale(make_loss("squared")), 1.0);
  EXPECT_THROW(taylor_gradient_scale(make_loss("hinge")), NotApplicableError);
}

TEST(Admissibility, ConvexBuiltinsPass) {
  for (const std::string name : {"logistic", "hinge", "squared", "exponential", "truncated_quadratic"}) {
    const AdmissibilityReport report = check_admissible(make_loss(name));
    EXPECT_TRUE(report.admissible()) << name;
    EXPECT_EQ(report.violation_count, 0u) << name;
  }
}

TEST(Admissibility, SavageIsNonconvexOnlyLeftOfZero) {
  const ConvexLoss f = make_loss("savage");
  const AdmissibilityReport report = check_admissible(f);
  EXPECT_FALSE(report.convex);
  EXPECT_TRUE(report.nonnegative);
  EXPECT_TRUE(report.decreasing_at_zero);
  ASSERT_FALSE(report.violations.empty());
  for (double x : report.violations) EXPECT_LT(x, 0.0);
  // Independent evidence: f'' < 0 somewhere on the left, and >= 0 on [0, 10].
  EXPECT_LT(oracle::second_central_diff(f.value, -2.0), 0.0);
  for (double x : check_grid(101, 0.0, 10.0)) EXPECT_GE(f.second_deriv(x), 0.0) << x;
}

TEST(Admissibility, InjectedDoublesFail) {
  const ConvexLoss linear{"negative_identity", [](double x) { return -x; }, [](double) { return -1.0; },
                          [](double) { return 0.0; }, true, {}};
  const AdmissibilityReport lin = check_admissible(linear);
  EXPECT_FALSE(lin.admissible());
  EXPECT_TRUE(lin.convex);
  EXPECT_FALSE(lin.nonnegative);
  EXPECT_FALSE(lin.violations.empty());

  const ConvexLoss parabola{"parabola", [](double x) { return x * x; }, [](double x) { return 2.0 * x; },
                            [](double) { return 2.0; }, true, {}};
  const AdmissibilityReport par = check_admissible(parabola);
  EXPECT_FALSE(par.admissible());
  EXPECT_TRUE(par.convex);
  EXPECT_FALSE(par.decreasing_at_zero);
  EXPECT_EQ(par.fp0, 0.0);
}

TEST(Admissibility, MidpointConvexityOnGridForConvexBuiltins) {
  const std::vector<double> grid = check_grid(201);
  for (const std::string name : {"logistic", "hinge", "squared", "exponential", "truncated_quadratic"}) {
    const ConvexLoss f = make_loss(name);
    for (double a : grid) {
      for (double b : grid) {
        ASSERT_LE(f.value(0.5 * (a + b)), 0.5 * (f.value(a) + f.value(b)) + 1e-12) << name << " " << a << " " << b;
      }
    }
  }
}

TEST(TailClassification, CaseTwoDerivativeTurnsNonnegative) {
  for (const std::string name : {"hinge", "truncated_quadratic", "squared"}) {
    const ConvexLoss f = make_loss(name);
    for (double rho : {2.0, 5.0, 10.0}) EXPECT_GE(eval_deriv(f, rho), 0.0) << name << " " << rho;
    // At rho = 1 the hinge reports its left derivative; the right derivative is 0.
    const double right = (f.value(1.0 + 1e-7) - f.value(1.0)) / 1e-7;
    EXPECT_GE(right, -1e-6) << name;
  }
  EXPECT_EQ(eval_deriv(make_loss("squared"), 1.0), 0.0);
  EXPECT_EQ(eval_deriv(make_loss("truncated_quadratic"), 1.0), 0.0);
}

TEST(TailClassification, CaseOneDerivativeStaysNegativeAndVanishes) {
  for (const std::string name : {"logistic", "exponential", "savage"}) {
    const ConvexLoss f = make_loss(name);
    for (double x : check_grid()) EXPECT_LT(eval_deriv(f, x), 0.0) << name << " " << x;
    EXPECT_LT(std::abs(eval_deriv(f, 10.0)), std::abs(eval_deriv(f, 1.0))) << name;
  }
}

TEST(ExponentialClamp, StaysFiniteFarOut) {
  const ConvexLoss f = make_loss("exponential");
  EXPECT_TRUE(std::isfinite(f.value(-1e6)));
  EXPECT_TRUE(std::isfinite(f.first_deriv(-1e6)));
  EXPECT_EQ(f.value(-1e6), std::exp(60.0));
  EXPECT_EQ(f.value(10.0), std::exp(-10.0));
}

TEST(Registry, AcceptsAdmissibleUserLoss) {
  ConvexLoss quartic{"shifted_quartic", [](double x) { return std::pow(x - 1.0, 4); },
                     [](double x) { return 4.0 * std::pow(x - 1.0, 3); },
                     [](double x) { return 12.0 * std::pow(x - 1.0, 2); }, true, {}};
  register_loss(quartic);
  EXPECT_TRUE(loss_registry().contains("shifted_quartic"));
  EXPECT_EQ(make_loss("shifted_quartic").value(0.0), 1.0);
  EXPECT_THROW(register_loss(quartic), ConfigError);
}

TEST(Registry, RejectsInadmissibleLoss) {
  ConvexLoss bad{"flat_at_zero", [](double x) { return x * x; }, [](double x) { return 2.0 * x; },
                 [](double) { return 2.0; }, true, {}};
  EXPECT_THROW(register_loss(bad), ConfigError);
  EXPECT_FALSE(loss_registry().contains("flat_at_zero"));
}

TEST(LossTable, CsvShapeAndColumns) {
  const std::string csv = loss_table_csv(builtin_loss_names());
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "name,f0,fp0,fpp0,taylor_ratio");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "logistic,0.69314718055994529,-0.5,0.25,0.5");
  EXPECT_EQ(rows[1].rfind("hinge,1,-1,", 0), 0u);
  EXPECT_EQ(rows[1].back(), ',');  // no Taylor ratio for hinge
  EXPECT_EQ(rows[2], "squared,1,-2,2,1");
  EXPECT_EQ(rows[5], "savage,0.25,-0.25,0.125,0.5");
}

TEST(TailClassification, StrictlyDecreasingSplitsTheCases) {
  for (const std::string name : {"logistic", "exponential", "savage"}) {
    EXPECT_TRUE(strictly_decreasing(make_loss(name))) << name;
  }
  for (const std::string name : {"hinge", "truncated_quadratic", "squared"}) {
    EXPECT_FALSE(strictly_decreasing(make_loss(name))) << name;
  }
}
