#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "gpo/bandit.hpp"
#include "gpo/trainer.hpp"
#include "oracles.hpp"

using namespace gpo;

namespace {

PreferenceDataset small_dataset() {
  return PreferenceDataset::normalized({{0, 0, 1}, {0, 1, 2}, {1, 2, 0}, {1, 0, 1}},
                                       {0.4, 0.1, 0.3, 0.2});
}

TrainConfig config_for(const std::string& loss, double lr, std::size_t steps, std::size_t every) {
  TrainConfig c;
  c.loss = loss;
  c.beta = 1.0;
  c.learning_rate = lr;
  c.steps = steps;
  c.eval_every = every;
  return c;
}

std::vector<double> column(const Trace& trace, const std::string& name) {
  std::vector<double> out;
  for (const auto& rec : trace) out.push_back(rec.extra.at(name));
  return out;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.beta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.eval_every = c.steps + 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroLearningRateLeavesPolicyUnchanged) {
  oracle::Gen gen(3);
  const SoftmaxPolicy ref(gen.matrix(2, 3));
  const SoftmaxPolicy init(gen.matrix(2, 3));
  const auto result = train(config_for("logistic", 0.0, 50, 10), small_dataset(), ref, init);
  EXPECT_EQ(result.final_policy.logits(), init.logits());
  for (const auto& rec : result.trace) {
    EXPECT_EQ(rec.gpo_loss, result.trace.front().gpo_loss);
    EXPECT_EQ(rec.kl, result.trace.front().kl);
    EXPECT_EQ(rec.mu_sq, result.trace.front().mu_sq);
  }
}

TEST(Train, SquaredLossStepZeroRecord) {
  const SoftmaxPolicy ref(2, 3);
  const auto result = train(config_for("squared", 0.1, 5, 5), small_dataset(), ref, ref);
  const auto& first = result.trace.front();
  EXPECT_EQ(first.step, 0u);
  EXPECT_EQ(first.kl, 0.0);
  EXPECT_EQ(first.mu_sq, 0.0);
  EXPECT_EQ(first.gpo_loss, 1.0);
}

TEST(Train, RecordsStepZeroEveryEvalAndFinalStep) {
  const SoftmaxPolicy ref(2, 3);
  const auto result = train(config_for("logistic", 0.1, 25, 10), small_dataset(), ref, ref);
  std::vector<std::size_t> steps;
  for (const auto& rec : result.trace) steps.push_back(rec.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 10, 20, 25}));
}

TEST(Train, TraceInvariantsHold) {
  oracle::Gen gen(8);
  for (const std::string& name : builtin_loss_names()) {
    const SoftmaxPolicy ref(gen.matrix(2, 3));
    const auto result = train(config_for(name, 0.05, 200, 20), small_dataset(), ref, ref);
    std::size_t last = 0;
    for (const auto& rec : result.trace) {
      EXPECT_GE(rec.kl, 0.0) << name;
      EXPECT_GE(rec.mu_sq, 0.0) << name;
      EXPECT_GE(rec.step, last) << name;
      last = rec.step;
    }
  }
}

TEST(Train, DeterministicFullBatch) {
  oracle::Gen gen(5);
  const SoftmaxPolicy ref(gen.matrix(2, 3));
  const auto config = config_for("exponential", 0.2, 300, 7);
  const auto a = train(config, small_dataset(), ref, ref);
  const auto b = train(config, small_dataset(), ref, ref);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.final_policy.logits(), b.final_policy.logits());
  EXPECT_EQ(trace_to_csv(a.trace), trace_to_csv(b.trace));
}

TEST(Train, MinibatchIsSeededAndDeterministic) {
  const SoftmaxPolicy ref(2, 3);
  auto config = config_for("logistic", 0.2, 100, 10);
  config.minibatch = 2;
  config.seed = 11;
  const auto a = train(config, small_dataset(), ref, ref);
  const auto b = train(config, small_dataset(), ref, ref);
  EXPECT_EQ(a.trace, b.trace);
  config.seed = 12;
  const auto c = train(config, small_dataset(), ref, ref);
  EXPECT_NE(a.final_policy.logits(), c.final_policy.logits());
}

TEST(Train, MinibatchMeanTracksFullBatch) {
  // Many small steps with a large batch should land close to the exact trajectory.
  const SoftmaxPolicy ref(2, 3);
  auto config = config_for("logistic", 0.01, 200, 200);
  const auto exact = train(config, small_dataset(), ref, ref);
  config.minibatch = 400;
  const auto sampled = train(config, small_dataset(), ref, ref);
  EXPECT_LT((exact.final_policy.logits() - sampled.final_policy.logits()).cwiseAbs().maxCoeff(),
            0.05);
}

TEST(Train, FirstStepDescendsBelowCurvatureThreshold) {
  // rho is linear in the logits with |grad rho|^2 = 2, so along the step the
  // objective's curvature is at most 2 beta^2 sup f'' over the visited range.
  // Any lr below 2 / that bound decreases the loss.
  oracle::Gen gen(21);
  const PreferenceDataset data = small_dataset();
  for (int trial = 0; trial < 30; ++trial) {
    const SoftmaxPolicy ref(gen.matrix(2, 3));
    const SoftmaxPolicy init(gen.matrix(2, 3, 0.5));
    const double beta = gen.uniform(0.2, 2.0);
    for (const std::string& name : builtin_loss_names()) {
      const ConvexLoss f = make_loss(name);
      if (!f.smooth) continue;
      double lo = 1e300;
      double hi = -1e300;
      for (const auto& p : data.pairs()) {
        const double x = beta * log_ratio_diff(init, ref, p);
        lo = std::min(lo, x - 1.0);
        hi = std::max(hi, x + 1.0);
      }
      double curvature = 0.0;
      for (int k = 0; k <= 2000; ++k) {
        curvature = std::max(curvature, f.second_deriv(lo + (hi - lo) * k / 2000.0));
      }
      const double g = gpo_gradient(f, beta, data, init, ref).norm();
      double lr = 1.0 / (2.0 * beta * beta * curvature);
      // Keep every beta * rho inside the window where the bound was taken.
      lr = std::min(lr, 0.5 / (beta * std::sqrt(2.0) * g + 1e-300));
      auto config = config_for(name, lr, 1, 1);
      config.beta = beta;
      const auto result = train(config, data, ref, init);
      EXPECT_LE(result.trace[1].gpo_loss, result.trace[0].gpo_loss) << name << " trial " << trial;
    }
  }
}

TEST(Train, DivergenceCarriesPartialTrace) {
  const SoftmaxPolicy ref(1, 3);
  auto config = config_for("squared", 0.1, 100, 1);
  config.beta = 10.0;
  try {
    train(config, BanditSpec::dataset(), ref, ref);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_LE(e.step(), 100u);
    ASSERT_FALSE(e.trace().empty());
    EXPECT_EQ(e.trace().front().step, 0u);
    EXPECT_LT(e.trace().back().step, e.step());
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
}

TEST(Train, RejectsInconsistentShapes) {
  const SoftmaxPolicy ref(2, 3);
  const SoftmaxPolicy wrong(2, 4);
  EXPECT_THROW(train(config_for("logistic", 0.1, 5, 5), small_dataset(), ref, wrong),
               DimensionError);
  const SoftmaxPolicy one_context(1, 3);
  EXPECT_ANY_THROW(train(config_for("logistic", 0.1, 5, 5), small_dataset(), one_context,
                         one_context));
}

TEST(Train, UnknownLossRejected) {
  const SoftmaxPolicy ref(2, 3);
  EXPECT_ANY_THROW(train(config_for("nope", 0.1, 5, 5), small_dataset(), ref, ref));
}

TEST(Train, BanditLogisticCollapsesToGreedyAction) {
  const auto run = run_bandit("logistic", 1.0, 0.1, 10000);
  EXPECT_GT(run.result.trace.back().extra.at("p_y1"), 0.99);
}

TEST(Train, CaseTwoLossesStayBelowReferenceCeiling) {
  // Ceilings are the reference-run maxima at beta = 1, lr = 0.1, 1e4 steps,
  // rounded up in the third decimal.
  const std::vector<std::pair<std::string, double>> ceilings = {
      {"hinge", 0.675}, {"truncated_quadratic", 0.666}, {"squared", 0.563}};
  for (const auto& [name, ceiling] : ceilings) {
    const auto run = run_bandit(name, 1.0, 0.1, 10000, 10);
    for (double p : column(run.result.trace, "p_y1")) EXPECT_LT(p, ceiling) << name;
    for (double rho : column(run.result.trace, "rho_max")) EXPECT_TRUE(std::isfinite(rho));
  }
}

TEST(Train, CaseOneLossesDriftUpWithShrinkingIncrements) {
  for (const std::string name : {"logistic", "exponential", "savage"}) {
    const auto run = run_bandit(name, 1.0, 0.1, 10000, 100);
    const auto p = column(run.result.trace, "p_y1");
    const std::size_t burn_in = 10;  // 1000 steps
    for (std::size_t i = burn_in; i + 1 < p.size(); ++i) {
      EXPECT_GE(p[i + 1], p[i]) << name << " at record " << i;
    }
    for (std::size_t i = burn_in; i + 2 < p.size(); ++i) {
      EXPECT_LE(p[i + 2] - p[i + 1], p[i + 1] - p[i] + 1e-15) << name << " at record " << i;
    }
  }
}

TEST(TraceCsv, SingleRecord) {
  const Trace trace = {{0, 1.0, 0.0, 0.0, {}}};
  EXPECT_EQ(trace_to_csv(trace), "step,gpo_loss,kl,mu_sq\n0,1,0,0\n");
}

TEST(TraceCsv, LineCountAndSortedExtras) {
  Trace trace(3);
  for (std::size_t i = 0; i < 3; ++i) {
    trace[i].step = i * 10;
    trace[i].extra = {{"zeta", 1.0}, {"alpha", 2.0}};
  }
  const std::string csv = trace_to_csv(trace);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,gpo_loss,kl,mu_sq,alpha,zeta");
}

TEST(TraceCsv, EmptyTraceRejected) { EXPECT_THROW(trace_to_csv({}), EmptyOutputError); }

TEST(TraceCsv, RoundTripIsBitExact) {
  oracle::Gen gen(99);
  for (int trial = 0; trial < 50; ++trial) {
    Trace trace;
    for (std::size_t i = 0; i < 5; ++i) {
      TraceRecord rec;
      rec.step = i;
      rec.gpo_loss = gen.normal(10.0);
      rec.kl = std::abs(gen.normal(1e-8));
      rec.mu_sq = std::exp(gen.normal(20.0));
      rec.extra["p"] = gen.uniform(0.0, 1.0) / 3.0;
      trace.push_back(rec);
    }
    EXPECT_EQ(parse_trace_csv(trace_to_csv(trace)), trace);
  }
}

TEST(TraceCsv, RejectsBadHeader) {
  EXPECT_THROW(parse_trace_csv("step,loss\n0,1\n"), ConfigError);
  EXPECT_THROW(parse_trace_csv("step,gpo_loss,kl,mu_sq\n0,1,0\n"), ConfigError);
}

TEST(MinimizeGpoLoss, ReachesStationaryPoint) {
  const SoftmaxPolicy ref(2, 3);
  const PreferenceDataset data = PreferenceDataset::normalized(
      {{0, 0, 1}, {0, 1, 0}, {1, 2, 0}, {1, 0, 2}}, {0.3, 0.2, 0.1, 0.4});
  for (const std::string name : {"logistic", "squared", "exponential"}) {
    const ConvexLoss f = make_loss(name);
    const auto result = minimize_gpo_loss(f, 1.0, data, ref, ref, 1e-9);
    EXPECT_TRUE(result.converged) << name;
    EXPECT_LT(gpo_gradient(f, 1.0, data, result.policy, ref).norm(), 1e-9) << name;
  }
}
