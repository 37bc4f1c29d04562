#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gpo/numeric.hpp"
#include "gpo/parallel.hpp"
#include "gpo/policy.hpp"
#include "gpo/trainer.hpp"

namespace gpo {

/// Three-action bandit with deterministic preferences y1 > y2, y2 > y3, y1 > y3,
/// each pair sampled with probability 1/3, and a uniform reference policy.
struct BanditSpec {
  static constexpr std::size_t kActions = 3;

  static PreferenceDataset dataset() {
    return PreferenceDataset::uniform({{0, 0, 1}, {0, 1, 2}, {0, 0, 2}});
  }

  static SoftmaxPolicy reference() { return SoftmaxPolicy(1, kActions); }
};

struct BanditRun {
  std::string loss;
  double beta;
  TrainResult result;
};

/// Trains from the uniform policy; extra trace columns p_y1, p_y2, p_y3, rho_max.
inline BanditRun run_bandit(const std::string& loss, double beta, double learning_rate,
                            std::size_t steps, std::size_t eval_every = 100) {
  TrainConfig config;
  config.loss = loss;
  config.beta = beta;
  config.learning_rate = learning_rate;
  config.steps = steps;
  config.eval_every = std::min(eval_every, steps);
  const PreferenceDataset data = BanditSpec::dataset();
  const SoftmaxPolicy ref = BanditSpec::reference();
  const ExtraMetrics extras = [&](const SoftmaxPolicy& theta, std::map<std::string, double>& out) {
    const Vector p = theta.probs(0);
    out["p_y1"] = p(0);
    out["p_y2"] = p(1);
    out["p_y3"] = p(2);
    out["rho_max"] = max_log_ratio_diff(data, theta, ref);
  };
  return {loss, beta, train(config, data, ref, ref, extras)};
}

struct BanditSummaryRow {
  std::string loss;
  double beta;
  double p_y1;
  double p_y2;
  double p_y3;
  double rho_max_terminal;
  double rho_max_peak;  // over all recorded steps
};

inline BanditSummaryRow summarize_bandit(const BanditRun& run) {
  const TraceRecord& last = run.result.trace.back();
  double peak = last.extra.at("rho_max");
  for (const auto& rec : run.result.trace) peak = std::max(peak, rec.extra.at("rho_max"));
  return {run.loss,          run.beta,
          last.extra.at("p_y1"), last.extra.at("p_y2"),
          last.extra.at("p_y3"), last.extra.at("rho_max"),
          peak};
}

struct BanditReport {
  std::vector<BanditRun> runs;  // loss-major, then beta
  std::vector<BanditSummaryRow> rows;
};

inline BanditReport bandit_report(const std::vector<double>& betas,
                                  const std::vector<std::string>& losses, double learning_rate,
                                  std::size_t steps, std::size_t eval_every = 100,
                                  std::size_t jobs = 1) {
  if (betas.empty() || losses.empty()) throw ConfigError("bandit report needs losses and betas");
  for (const auto& loss : losses) make_loss(loss);
  std::vector<std::optional<BanditRun>> cells(losses.size() * betas.size());
  parallel_for(cells.size(), jobs, [&](std::size_t cell) {
    cells[cell] = run_bandit(losses[cell / betas.size()], betas[cell % betas.size()],
                            learning_rate, steps, eval_every);
  });
  BanditReport report;
  for (auto& cell : cells) {
    report.rows.push_back(summarize_bandit(*cell));
    report.runs.push_back(std::move(*cell));
  }
  return report;
}

inline std::string bandit_summary_csv(const std::vector<BanditSummaryRow>& rows) {
  std::string out = "loss,beta,p_y1,p_y2,p_y3,rho_max_terminal,rho_max_peak\n";
  for (const auto& r : rows) {
    out += r.loss + ',' + format_double(r.beta) + ',' + format_double(r.p_y1) + ',' +
           format_double(r.p_y2) + ',' + format_double(r.p_y3) + ',' +
           format_double(r.rho_max_terminal) + ',' + format_double(r.rho_max_peak) + '\n';
  }
  return out;
}

}  // namespace gpo
