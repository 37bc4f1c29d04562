#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gpo/errors.hpp"
#include "gpo/numeric.hpp"
#include "gpo/parallel.hpp"
#include "gpo/policy.hpp"
#include "gpo/reward.hpp"
#include "gpo/rng.hpp"
#include "gpo/trainer.hpp"

// Synthetic over-optimization study: a golden Bradley-Terry judge labels an
// offline dataset, policies are trained on it, and their true win rate against
// a golden policy is traced against KL from the reference.

namespace gpo {

struct InstanceParams {
  std::size_t contexts = 8;
  std::size_t actions = 16;
  /// Standard deviation of the golden rewards.
  double reward_scale = 0.5;
  /// Standard deviation of the behavior-policy logits.
  double behavior_scale = 1.0;
  std::size_t dataset_size = 2048;
  /// Golden policy = softmax(golden_reward / temperature).
  double temperature = 1.0;

  void validate() const {
    if (contexts < 1) throw ConfigError("instance needs at least one context");
    if (actions < 3) throw ConfigError("instance needs at least three actions");
    if (dataset_size < 1) throw ConfigError("dataset size must be positive");
    if (!(reward_scale >= 0.0) || !std::isfinite(reward_scale)) {
      throw ConfigError("reward_scale must be finite and nonnegative");
    }
    if (!(behavior_scale >= 0.0) || !std::isfinite(behavior_scale)) {
      throw ConfigError("behavior_scale must be finite and nonnegative");
    }
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  }
};

struct GoldenInstance {
  InstanceParams params;
  std::uint64_t seed = 0;
  Logits golden_reward;
  std::vector<PreferenceMatrix> golden_prefs;  // one per context
  SoftmaxPolicy golden_policy{1, 2};
  /// Behavior policy mu; also the reference policy the trained policies start from.
  SoftmaxPolicy behavior{1, 2};
  PreferenceDataset dataset;
};

inline GoldenInstance make_instance(const InstanceParams& params, std::uint64_t seed) {
  params.validate();
  const auto C = static_cast<Eigen::Index>(params.contexts);
  const auto A = static_cast<Eigen::Index>(params.actions);

  GoldenInstance inst;
  inst.params = params;
  inst.seed = seed;

  Rng reward_rng = named_stream(seed, "goodhart/reward");
  std::normal_distribution<double> normal(0.0, 1.0);
  inst.golden_reward = Logits(C, A);
  for (Eigen::Index c = 0; c < C; ++c) {
    for (Eigen::Index a = 0; a < A; ++a) inst.golden_reward(c, a) = params.reward_scale * normal(reward_rng);
  }
  for (Eigen::Index c = 0; c < C; ++c) {
    inst.golden_prefs.push_back(bt_preferences(inst.golden_reward.row(c).transpose()));
  }
  inst.golden_policy = SoftmaxPolicy(Logits(inst.golden_reward / params.temperature));

  Rng behavior_rng = named_stream(seed, "goodhart/behavior");
  Logits behavior_logits(C, A);
  for (Eigen::Index c = 0; c < C; ++c) {
    for (Eigen::Index a = 0; a < A; ++a) behavior_logits(c, a) = params.behavior_scale * normal(behavior_rng);
  }
  inst.behavior = SoftmaxPolicy(std::move(behavior_logits));

  std::vector<std::vector<double>> cumulative(params.contexts);
  for (std::size_t c = 0; c < params.contexts; ++c) {
    const Vector p = inst.behavior.probs(c);
    double acc = 0.0;
    for (Eigen::Index a = 0; a < A; ++a) cumulative[c].push_back(acc += p(a));
  }
  Rng pair_rng = named_stream(seed, "goodhart/pairs");
  const auto draw_action = [&](std::size_t c) {
    const double u = uniform01(pair_rng) * cumulative[c].back();
    auto it = std::upper_bound(cumulative[c].begin(), cumulative[c].end(), u);
    if (it == cumulative[c].end()) --it;
    return static_cast<std::size_t>(it - cumulative[c].begin());
  };
  std::vector<PreferencePair> pairs;
  pairs.reserve(params.dataset_size);
  for (std::size_t k = 0; k < params.dataset_size; ++k) {
    const auto c = static_cast<std::size_t>(uniform01(pair_rng) * static_cast<double>(params.contexts));
    std::size_t i = draw_action(c);
    std::size_t j = draw_action(c);
    while (j == i) j = draw_action(c);
    const bool i_wins = uniform01(pair_rng) < inst.golden_prefs[c](i, j);
    pairs.push_back(i_wins ? PreferencePair{c, i, j} : PreferencePair{c, j, i});
  }
  inst.dataset = PreferenceDataset::uniform(std::move(pairs));
  return inst;
}

/// Context-averaged sum_{i,j} pi(i) opp(j) p(i > j), computed exactly.
inline double win_rate(const SoftmaxPolicy& theta, const SoftmaxPolicy& opponent,
                       const std::vector<PreferenceMatrix>& golden_prefs) {
  detail::require_same_shape(theta, opponent);
  if (golden_prefs.size() != theta.contexts()) {
    throw DimensionError("need one preference matrix per context");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < theta.contexts(); ++c) {
    if (golden_prefs[c].size() != theta.actions()) {
      throw DimensionError("preference matrix size differs from action count");
    }
    total += theta.probs(c).dot(golden_prefs[c].matrix() * opponent.probs(c));
  }
  return total / static_cast<double>(theta.contexts());
}

enum class LrMode {
  /// Learning rate applied to the logits as is.
  logit,
  /// Effective rate lr / beta^2: plain gradient descent on the implicit reward
  /// beta * logits, so one lr is stable across many decades of beta.
  reward,
};

struct SweepConfig {
  std::vector<std::string> losses = builtin_loss_names();
  std::vector<double> betas = {0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> lrs = {1.0};
  std::size_t steps = 4000;
  std::size_t eval_every = 10;
  std::vector<std::uint64_t> seeds = {0};
  InstanceParams instance;
  std::uint64_t instance_seed = 0;
  LrMode lr_mode = LrMode::reward;
  std::size_t minibatch = 0;

  void validate() const {
    if (losses.empty() || betas.empty() || lrs.empty() || seeds.empty()) {
      throw ConfigError("sweep lists must be nonempty");
    }
    for (const auto& loss : losses) make_loss(loss);
    for (double b : betas) {
      if (!(b > 0.0)) throw ConfigError("betas must be positive");
    }
    for (double lr : lrs) {
      if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
    }
    if (steps == 0 || eval_every == 0 || eval_every > steps) {
      throw ConfigError("need steps > 0 and 1 <= eval_every <= steps");
    }
    instance.validate();
  }

  double effective_lr(double lr, double beta) const {
    return lr_mode == LrMode::reward ? lr / (beta * beta) : lr;
  }
};

struct SweepRow {
  std::string loss;
  double beta;
  double lr;
  std::uint64_t seed;
  std::size_t step;
  double kl;
  double win_rate;
  double mu_sq;
  bool diverged;
};

/// Trains every (loss, beta, lr, seed) cell from the behavior policy; rows are
/// ordered by cell (loss-major) then step, independent of `jobs`.
inline std::vector<SweepRow> run_sweep(const SweepConfig& config, const GoldenInstance& instance,
                                       std::size_t jobs = 1) {
  config.validate();
  struct Cell {
    std::string loss;
    double beta;
    double lr;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const auto& loss : config.losses) {
    for (double beta : config.betas) {
      for (double lr : config.lrs) {
        for (std::uint64_t seed : config.seeds) cells.push_back({loss, beta, lr, seed});
      }
    }
  }

  std::vector<std::vector<SweepRow>> results(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t k) {
    const Cell& cell = cells[k];
    TrainConfig tc;
    tc.loss = cell.loss;
    tc.beta = cell.beta;
    tc.learning_rate = config.effective_lr(cell.lr, cell.beta);
    tc.steps = config.steps;
    tc.eval_every = config.eval_every;
    tc.seed = cell.seed;
    tc.minibatch = config.minibatch;
    const ExtraMetrics extras = [&](const SoftmaxPolicy& theta, std::map<std::string, double>& out) {
      out["win_rate"] = win_rate(theta, instance.golden_policy, instance.golden_prefs);
    };
    Trace trace;
    bool diverged = false;
    try {
      trace = train(tc, instance.dataset, instance.behavior, instance.behavior, extras).trace;
    } catch (const DivergenceError& e) {
      trace = e.trace();
      diverged = true;
    }
    for (const auto& rec : trace) {
      results[k].push_back({cell.loss, cell.beta, cell.lr, cell.seed, rec.step, rec.kl,
                            rec.extra.at("win_rate"), rec.mu_sq, diverged});
    }
  });

  std::vector<SweepRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "loss,beta,lr,seed,step,kl,win_rate,mu_sq,diverged\n";
  for (const auto& r : rows) {
    out += r.loss + ',' + format_double(r.beta) + ',' + format_double(r.lr) + ',' +
           std::to_string(r.seed) + ',' + std::to_string(r.step) + ',' + format_double(r.kl) +
           ',' + format_double(r.win_rate) + ',' + format_double(r.mu_sq) + ',' +
           (r.diverged ? "1" : "0") + '\n';
  }
  return out;
}

/// Nearest-rank percentile, q in (0, 1].
inline double nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) throw EmptyOutputError("percentile of an empty column");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

struct SweepSummary {
  std::string loss;
  double beta;
  double peak_win_rate;
  double kl_at_peak;
  double win_rate_p90;
  double median_kl;
  std::size_t rows;
};

/// Per (loss, beta), pooled over learning rates, seeds and evaluation steps.
inline std::vector<SweepSummary> summarize(const std::vector<SweepRow>& table) {
  if (table.empty()) throw EmptyOutputError("nothing to summarize");
  std::vector<std::pair<std::string, double>> order;
  std::map<std::pair<std::string, double>, std::vector<const SweepRow*>> groups;
  for (const auto& row : table) {
    const auto key = std::make_pair(row.loss, row.beta);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&row);
  }
  std::vector<SweepSummary> out;
  for (const auto& key : order) {
    const auto& rows = groups[key];
    const SweepRow* best = rows.front();
    std::vector<double> wins;
    std::vector<double> kls;
    for (const SweepRow* r : rows) {
      if (r->win_rate > best->win_rate) best = r;
      wins.push_back(r->win_rate);
      kls.push_back(r->kl);
    }
    out.push_back({key.first, key.second, best->win_rate, best->kl, nearest_rank(wins, 0.9),
                   nearest_rank(kls, 0.5), rows.size()});
  }
  return out;
}

inline std::string summary_csv(const std::vector<SweepSummary>& summary) {
  std::string out = "loss,beta,peak_win_rate,kl_at_peak,win_rate_p90,median_kl,rows\n";
  for (const auto& s : summary) {
    out += s.loss + ',' + format_double(s.beta) + ',' + format_double(s.peak_win_rate) + ',' +
           format_double(s.kl_at_peak) + ',' + format_double(s.win_rate_p90) + ',' +
           format_double(s.median_kl) + ',' + std::to_string(s.rows) + '\n';
  }
  return out;
}

}  // namespace gpo
