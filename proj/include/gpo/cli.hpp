#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "gpo/bandit.hpp"
#include "gpo/checks.hpp"
#include "gpo/config.hpp"
#include "gpo/errors.hpp"
#include "gpo/gaussian.hpp"
#include "gpo/goodhart.hpp"
#include "gpo/io.hpp"
#include "gpo/loss.hpp"
#include "gpo/parallel.hpp"
#include "gpo/reward.hpp"
#include "gpo/trainer.hpp"

// `gpo-lab` subcommands. Every subcommand that writes files also writes a
// manifest.json next to them. Exit codes: 0 success, 1 invalid input,
// 2 numeric divergence, 64 unknown subcommand.

namespace gpo::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitDivergence = 2;
inline constexpr int kExitUsage = 64;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"losses",   "train",    "bandit", "gaussians",
                                                 "rewards",  "goodhart", "check"};
  return names;
}

inline std::string usage() {
  return "usage: gpo-lab <command> [options]\n"
         "\n"
         "commands:\n"
         "  losses     print the loss table as CSV\n"
         "  train      train a tabular policy from a config file\n"
         "  bandit     three-action bandit sweep over losses and betas\n"
         "  gaussians  shift scan of the Gaussian-mixture counterexample\n"
         "  rewards    reward-classification checks, or fit rewards to a preference matrix\n"
         "  goodhart   synthetic over-optimization sweep\n"
         "  check      run the full invariant suite\n"
         "\n"
         "Run `gpo-lab <command> --help` for options. GPO_LAB_OUT sets the default output root.\n";
}

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> output_files;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_manifest(const fs::path& dir, const Manifest& m) {
  for (const auto& file : m.output_files) {
    if (!fs::exists(dir / file)) throw EmptyOutputError("missing output " + (dir / file).string());
  }
  const Json j = {{"command", m.command},
                  {"config_hash", m.config_hash},
                  {"tool_version", kToolVersion},
                  {"seed", m.seed},
                  {"timestamp", utc_timestamp()},
                  {"output_files", m.output_files}};
  write_json_file(dir / "manifest.json", j);
}

inline fs::path output_root() {
  const char* env = std::getenv("GPO_LAB_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

/// Flag beats config key beats `<root>/<default_leaf>`.
inline fs::path resolve_out(const std::optional<std::string>& flag, const Json& config,
                            const fs::path& default_leaf) {
  if (flag) return *flag;
  if (config.contains("out")) return config.at("out").get<std::string>();
  return output_root() / default_leaf;
}

// Typed access to config values with ConfigError on mismatch.
namespace detail {

inline const Json* find(const Json& j, const std::string& key) {
  return j.is_object() && j.contains(key) ? &j.at(key) : nullptr;
}

// TOML integers arrive signed, JSON ones unsigned when nonnegative.
inline bool is_nonnegative_integer(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

inline double get_double(const Json& j, const std::string& key, double fallback) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_number()) throw ConfigError("'" + key + "' must be a number");
  return v->get<double>();
}

inline std::uint64_t get_uint(const Json& j, const std::string& key, std::uint64_t fallback) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!is_nonnegative_integer(*v)) throw ConfigError("'" + key + "' must be a nonnegative integer");
  return v->get<std::uint64_t>();
}

inline std::string get_string(const Json& j, const std::string& key, const std::string& fallback) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError("'" + key + "' must be a string");
  return v->get<std::string>();
}

template <typename T>
std::vector<T> get_list(const Json& j, const std::string& key, const std::vector<T>& fallback) {
  const Json* v = find(j, key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError("'" + key + "' must be an array");
  std::vector<T> out;
  for (const auto& item : *v) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!item.is_string()) throw ConfigError("'" + key + "' must hold strings");
    } else if constexpr (std::is_integral_v<T>) {
      if (!is_nonnegative_integer(item)) throw ConfigError("'" + key + "' must hold nonnegative integers");
    } else {
      if (!item.is_number()) throw ConfigError("'" + key + "' must hold numbers");
    }
    out.push_back(item.get<T>());
  }
  return out;
}

inline void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a table");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

inline Json load_optional_config(const std::optional<std::string>& path) {
  return path ? load_config(*path) : Json::object();
}

inline fs::path relative_to(const std::optional<std::string>& config_path, const std::string& file) {
  fs::path p(file);
  if (p.is_absolute() || !config_path) return p;
  return fs::path(*config_path).parent_path() / p;
}

inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

class Context {
 public:
  Context(std::ostream& out, std::ostream& err) : out(out), err(err) {}
  std::ostream& out;
  std::ostream& err;
};

/// Parses subcommand flags; returns an exit code when the command should stop (help).
inline std::optional<int> parse_args(CLI::App& app, const std::vector<std::string>& args, Context& ctx) {
  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    ctx.out << app.help();
    return kExitOk;
  }
  return std::nullopt;
}

inline int cmd_losses(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Print the loss table (name, f(0), f'(0), f''(0), Taylor ratio) as CSV."};
  std::optional<std::string> out_dir;
  app.add_option("--out", out_dir, "also write losses.csv (and a manifest) to this directory");
  if (auto code = parse_args(app, args, ctx)) return *code;

  const std::string csv = loss_table_csv(builtin_loss_names());
  ctx.out << csv;
  if (out_dir) {
    const fs::path dir(*out_dir);
    write_text_file(dir / "losses.csv", csv);
    write_manifest(dir, {"losses", config_hash(Json::object()), 0, {"losses.csv"}});
  }
  return kExitOk;
}

inline int cmd_train(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Train a tabular softmax policy on a preference dataset."};
  std::optional<std::string> config_path, out_dir, loss, dataset, reference, init;
  std::optional<double> beta, lr;
  std::optional<std::uint64_t> steps, eval_every, seed, minibatch;
  app.add_option("--config", config_path, "TOML or JSON training config");
  app.add_option("--out", out_dir, "output directory (default <root>/train/<config hash>)");
  app.add_option("--loss", loss);
  app.add_option("--beta", beta);
  app.add_option("--lr", lr, "learning rate");
  app.add_option("--steps", steps);
  app.add_option("--eval-every", eval_every);
  app.add_option("--seed", seed);
  app.add_option("--minibatch", minibatch, "pairs per step; 0 = full batch");
  app.add_option("--dataset", dataset, "dataset JSON");
  app.add_option("--reference", reference, "reference policy JSON (default uniform)");
  app.add_option("--init", init, "initial policy JSON (default the reference)");
  if (auto code = parse_args(app, args, ctx)) return *code;

  Json config = detail::load_optional_config(config_path);
  detail::reject_unknown(config, {"loss", "beta", "learning_rate", "steps", "eval_every", "seed",
                                  "minibatch", "dataset", "reference", "init", "out"},
                         "train config");
  // Paths in the config file are relative to the file; flag paths to the working directory.
  for (const char* key : {"dataset", "reference", "init"}) {
    if (config.contains(key)) {
      config[key] = detail::relative_to(config_path, detail::get_string(config, key, "")).string();
    }
  }
  if (loss) config["loss"] = *loss;
  if (beta) config["beta"] = *beta;
  if (lr) config["learning_rate"] = *lr;
  if (steps) config["steps"] = *steps;
  if (eval_every) config["eval_every"] = *eval_every;
  if (seed) config["seed"] = *seed;
  if (minibatch) config["minibatch"] = *minibatch;
  if (dataset) config["dataset"] = *dataset;
  if (reference) config["reference"] = *reference;
  if (init) config["init"] = *init;

  TrainConfig tc;
  tc.loss = detail::get_string(config, "loss", tc.loss);
  tc.beta = detail::get_double(config, "beta", tc.beta);
  tc.learning_rate = detail::get_double(config, "learning_rate", tc.learning_rate);
  tc.steps = detail::get_uint(config, "steps", tc.steps);
  tc.eval_every = detail::get_uint(config, "eval_every", tc.eval_every);
  tc.seed = detail::get_uint(config, "seed", tc.seed);
  tc.minibatch = detail::get_uint(config, "minibatch", tc.minibatch);
  tc.validate();
  make_loss(tc.loss);

  if (!config.contains("dataset")) throw ConfigError("train needs a dataset (config key or --dataset)");
  const PreferenceDataset data = dataset_from_json(load_json_file(detail::get_string(config, "dataset", "")));
  SoftmaxPolicy ref(1, 2);
  if (config.contains("reference")) {
    ref = policy_from_json(load_json_file(detail::get_string(config, "reference", "")));
  } else {
    std::size_t contexts = 1;
    std::size_t actions = 2;
    for (const auto& p : data.pairs()) {
      contexts = std::max(contexts, p.context + 1);
      actions = std::max({actions, p.winner + 1, p.loser + 1});
    }
    ref = SoftmaxPolicy(contexts, actions);
  }
  const SoftmaxPolicy start =
      config.contains("init") ? policy_from_json(load_json_file(detail::get_string(config, "init", ""))) : ref;

  const std::string hash = config_hash(config);
  const fs::path dir = resolve_out(out_dir, config, fs::path("train") / hash);
  try {
    const TrainResult result = train(tc, data, ref, start);
    write_text_file(dir / "trace.csv", trace_to_csv(result.trace));
    write_json_file(dir / "final_policy.json", policy_to_json(result.final_policy));
    write_manifest(dir, {"train", hash, tc.seed, {"trace.csv", "final_policy.json"}});
    ctx.out << (dir / "trace.csv").string() << '\n';
    return kExitOk;
  } catch (const DivergenceError& e) {
    write_text_file(dir / "trace.csv", trace_to_csv(e.trace()));
    write_manifest(dir, {"train", hash, tc.seed, {"trace.csv"}});
    throw;
  }
}

inline int cmd_bandit(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Three-action bandit: terminal action probabilities per (loss, beta)."};
  std::optional<std::string> config_path, out_dir;
  std::vector<std::string> losses;
  std::vector<double> betas;
  std::optional<double> lr;
  std::optional<std::uint64_t> steps, eval_every;
  std::size_t jobs = default_jobs();
  app.add_option("--config", config_path, "TOML or JSON config");
  app.add_option("--out", out_dir, "output directory (default <root>/bandit)");
  app.add_option("--losses", losses, "comma-separated loss names")->delimiter(',');
  app.add_option("--betas", betas, "comma-separated betas")->delimiter(',');
  app.add_option("--lr", lr, "learning rate (default 0.1)");
  app.add_option("--steps", steps, "training steps (default 10000)");
  app.add_option("--eval-every", eval_every, "trace interval (default 100)");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  if (auto code = parse_args(app, args, ctx)) return *code;

  Json config = detail::load_optional_config(config_path);
  detail::reject_unknown(config, {"losses", "betas", "learning_rate", "steps", "eval_every", "out"},
                         "bandit config");
  if (!losses.empty()) config["losses"] = losses;
  if (!betas.empty()) config["betas"] = betas;
  if (lr) config["learning_rate"] = *lr;
  if (steps) config["steps"] = *steps;
  if (eval_every) config["eval_every"] = *eval_every;

  const auto loss_list = detail::get_list<std::string>(config, "losses", builtin_loss_names());
  const auto beta_list = detail::get_list<double>(config, "betas", {1.0});
  const double rate = detail::get_double(config, "learning_rate", 0.1);
  const std::size_t n_steps = detail::get_uint(config, "steps", 10000);
  const std::size_t every = detail::get_uint(config, "eval_every", 100);
  if (n_steps == 0 || every == 0) throw ConfigError("steps and eval_every must be positive");

  const BanditReport report = bandit_report(beta_list, loss_list, rate, n_steps, every, jobs);
  const std::string hash = config_hash(config);
  const fs::path dir = resolve_out(out_dir, config, "bandit");
  std::vector<std::string> files;
  for (const auto& run : report.runs) {
    const std::string name = "trace_" + run.loss + "_beta" + detail::short_number(run.beta) + ".csv";
    write_text_file(dir / name, trace_to_csv(run.result.trace));
    files.push_back(name);
    ctx.err << "cell " << run.loss << " beta=" << detail::short_number(run.beta) << " done\n";
  }
  const std::string summary = bandit_summary_csv(report.rows);
  write_text_file(dir / "bandit_summary.csv", summary);
  files.push_back("bandit_summary.csv");
  write_manifest(dir, {"bandit", hash, 0, files});
  ctx.out << summary;
  return kExitOk;
}

inline int cmd_gaussians(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Scan KL and mu-weighted squared loss over shifted Gaussian-mixture policies."};
  std::optional<std::string> config_path, out_dir;
  std::optional<std::uint64_t> seed, n, grid, window;
  std::size_t jobs = default_jobs();
  app.add_option("--config", config_path, "TOML or JSON config");
  app.add_option("--out", out_dir, "output directory (default <root>/gaussians/seed<S>)");
  app.add_option("--seed", seed, "behavior-mixture seed (default: the committed counterexample seed)");
  app.add_option("--n", n, "Monte Carlo samples per grid point (default 2000)");
  app.add_option("--grid", grid, "grid points on [-1, 1] (default 401)");
  app.add_option("--window", window, "local-minimum window, odd (default 5)");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  if (auto code = parse_args(app, args, ctx)) return *code;

  Json config = detail::load_optional_config(config_path);
  detail::reject_unknown(config, {"seed", "n", "grid", "window", "out"}, "gaussians config");
  if (seed) config["seed"] = *seed;
  if (n) config["n"] = *n;
  if (grid) config["grid"] = *grid;
  if (window) config["window"] = *window;

  const std::uint64_t s = detail::get_uint(config, "seed", kCounterexampleSeed);
  const std::size_t samples = detail::get_uint(config, "n", kDefaultScanSamples);
  const std::size_t points = detail::get_uint(config, "grid", kDefaultScanPoints);
  const std::size_t win = detail::get_uint(config, "window", kDefaultMinimaWindow);
  const CounterexampleReport report = analyze_counterexample(s, samples, points, win, jobs);

  const std::string hash = config_hash(config);
  const fs::path dir = resolve_out(out_dir, config, fs::path("gaussians") / ("seed" + std::to_string(s)));
  write_text_file(dir / "scan.csv", scan_csv(report.scan));
  const Json minima = {{"seed", s},
                       {"behavior_mixture", mixture_to_json(report.mu)},
                       {"mu_sq_minima", report.mu_sq_minima},
                       {"kl_minima", report.kl_minima},
                       {"witnesses", report.witnesses},
                       {"zero_at_origin", report.zero_at_origin},
                       {"counterexample", report.found()}};
  write_json_file(dir / "minima.json", minima);
  write_manifest(dir, {"gaussians", hash, s, {"scan.csv", "minima.json"}});
  ctx.out << "seed " << s << ": " << report.mu_sq_minima.size() << " mu_sq minima, "
          << report.kl_minima.size() << " kl minima, " << report.witnesses.size()
          << " witnesses, counterexample " << (report.found() ? "found" : "not found") << '\n';
  return kExitOk;
}

inline int cmd_rewards(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Reward-classification checks, or a pointwise reward fit for a preference matrix."};
  std::vector<std::string> checks;
  std::optional<std::string> prefs_path, out_dir;
  std::vector<double> mu_values;
  std::string loss = "logistic";
  app.add_option("--check", checks, "bayes, bt or equivalence (repeatable, comma-separated)")
      ->delimiter(',')
      ->check(CLI::IsMember({"bayes", "bt", "equivalence"}));
  app.add_option("--prefs", prefs_path, "preference matrix JSON {\"p\": [[...]]} to fit");
  app.add_option("--mu", mu_values, "comma-separated sampling distribution (default uniform)")->delimiter(',');
  app.add_option("--loss", loss, "loss used for the fit");
  app.add_option("--out", out_dir, "output directory for the fit (default <root>/rewards)");
  if (auto code = parse_args(app, args, ctx)) return *code;

  if (prefs_path) {
    const PreferenceMatrix prefs = preferences_from_json(load_json_file(*prefs_path));
    const auto n = static_cast<Eigen::Index>(prefs.size());
    Eigen::VectorXd mu = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    if (!mu_values.empty()) mu = Eigen::Map<const Eigen::VectorXd>(mu_values.data(), static_cast<Eigen::Index>(mu_values.size()));
    const ConvexLoss f = make_loss(loss);
    const RewardVector r = fit_pointwise_reward(f, prefs, mu);
    const Eigen::VectorXd succ = p_succ_mu(prefs, mu);
    const Json result = {{"loss", loss},
                         {"mu", std::vector<double>(mu.data(), mu.data() + mu.size())},
                         {"rewards", std::vector<double>(r.data(), r.data() + r.size())},
                         {"p_succ_mu", std::vector<double>(succ.data(), succ.data() + succ.size())}};
    const Json config = {{"prefs", *prefs_path}, {"loss", loss}, {"mu", result["mu"]}};
    const fs::path dir = resolve_out(out_dir, Json::object(), "rewards");
    write_json_file(dir / "reward_fit.json", result);
    write_manifest(dir, {"rewards", config_hash(config), 0, {"reward_fit.json"}});
    ctx.out << result.dump(2) << '\n';
    if (checks.empty()) return kExitOk;
  }

  if (checks.empty()) checks = {"bayes", "bt", "equivalence"};
  std::vector<CheckResult> results;
  for (const auto& which : checks) {
    const auto part = check_rewards(which);
    results.insert(results.end(), part.begin(), part.end());
  }
  ctx.out << check_table(results);
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; })
             ? kExitOk
             : kExitInvalid;
}

inline SweepConfig sweep_config_from_json(const Json& config) {
  detail::reject_unknown(config, {"losses", "betas", "lrs", "steps", "eval_every", "seeds", "lr_mode",
                                  "minibatch", "instance", "out"},
                         "goodhart config");
  SweepConfig sc;
  sc.losses = detail::get_list<std::string>(config, "losses", sc.losses);
  sc.betas = detail::get_list<double>(config, "betas", sc.betas);
  sc.lrs = detail::get_list<double>(config, "lrs", sc.lrs);
  sc.steps = detail::get_uint(config, "steps", sc.steps);
  sc.eval_every = detail::get_uint(config, "eval_every", sc.eval_every);
  sc.seeds = detail::get_list<std::uint64_t>(config, "seeds", sc.seeds);
  sc.minibatch = detail::get_uint(config, "minibatch", sc.minibatch);
  const std::string mode = detail::get_string(config, "lr_mode", "reward");
  if (mode == "reward") {
    sc.lr_mode = LrMode::reward;
  } else if (mode == "logit") {
    sc.lr_mode = LrMode::logit;
  } else {
    throw ConfigError("lr_mode must be \"reward\" or \"logit\"");
  }
  if (config.contains("instance")) {
    const Json& inst = config.at("instance");
    detail::reject_unknown(inst, {"seed", "contexts", "actions", "reward_scale", "behavior_scale",
                                  "dataset_size", "temperature"},
                           "[instance]");
    sc.instance_seed = detail::get_uint(inst, "seed", sc.instance_seed);
    sc.instance.contexts = detail::get_uint(inst, "contexts", sc.instance.contexts);
    sc.instance.actions = detail::get_uint(inst, "actions", sc.instance.actions);
    sc.instance.reward_scale = detail::get_double(inst, "reward_scale", sc.instance.reward_scale);
    sc.instance.behavior_scale = detail::get_double(inst, "behavior_scale", sc.instance.behavior_scale);
    sc.instance.dataset_size = detail::get_uint(inst, "dataset_size", sc.instance.dataset_size);
    sc.instance.temperature = detail::get_double(inst, "temperature", sc.instance.temperature);
  }
  sc.validate();
  return sc;
}

inline int cmd_goodhart(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Synthetic over-optimization sweep: win rate against KL per (loss, beta, lr, seed)."};
  std::optional<std::string> config_path, out_dir, lr_mode;
  std::vector<std::string> losses;
  std::vector<double> betas, lrs;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> steps, eval_every, instance_seed, minibatch;
  std::size_t jobs = default_jobs();
  app.add_option("--config", config_path, "TOML or JSON sweep config");
  app.add_option("--out", out_dir, "output directory (default <root>/goodhart/<config hash>)");
  app.add_option("--losses", losses)->delimiter(',');
  app.add_option("--betas", betas)->delimiter(',');
  app.add_option("--lrs", lrs)->delimiter(',');
  app.add_option("--seeds", seeds)->delimiter(',');
  app.add_option("--steps", steps);
  app.add_option("--eval-every", eval_every);
  app.add_option("--minibatch", minibatch);
  app.add_option("--lr-mode", lr_mode, "reward (lr / beta^2) or logit");
  app.add_option("--instance-seed", instance_seed);
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  if (auto code = parse_args(app, args, ctx)) return *code;

  Json config = detail::load_optional_config(config_path);
  if (!losses.empty()) config["losses"] = losses;
  if (!betas.empty()) config["betas"] = betas;
  if (!lrs.empty()) config["lrs"] = lrs;
  if (!seeds.empty()) config["seeds"] = seeds;
  if (steps) config["steps"] = *steps;
  if (eval_every) config["eval_every"] = *eval_every;
  if (minibatch) config["minibatch"] = *minibatch;
  if (lr_mode) config["lr_mode"] = *lr_mode;
  if (instance_seed) config["instance"]["seed"] = *instance_seed;

  const SweepConfig sc = sweep_config_from_json(config);
  const GoldenInstance instance = make_instance(sc.instance, sc.instance_seed);
  const std::vector<SweepRow> rows = run_sweep(sc, instance, jobs);
  const std::vector<SweepSummary> summary = summarize(rows);

  const std::string hash = config_hash(config);
  const fs::path dir = resolve_out(out_dir, config, fs::path("goodhart") / hash);
  write_text_file(dir / "sweep.csv", sweep_csv(rows));
  write_text_file(dir / "summary.csv", summary_csv(summary));
  write_json_file(dir / "instance.json", instance_to_json(instance));
  write_manifest(dir, {"goodhart", hash, sc.instance_seed, {"sweep.csv", "summary.csv", "instance.json"}});
  ctx.out << summary_csv(summary);
  return kExitOk;
}

inline int cmd_check(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Run the full invariant suite; exit 0 iff every check passes."};
  if (auto code = parse_args(app, args, ctx)) return *code;
  const std::vector<CheckResult> results = run_all_checks();
  ctx.out << check_table(results);
  const auto failed = std::count_if(results.begin(), results.end(), [](const CheckResult& r) { return !r.passed; });
  ctx.out << results.size() - static_cast<std::size_t>(failed) << '/' << results.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitInvalid;
}

/// Runs `args[0]` with the remaining arguments; never throws.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  if (args.empty()) {
    err << usage();
    return kExitUsage;
  }
  const std::string& command = args.front();
  if (command == "--help" || command == "-h" || command == "help") {
    out << usage();
    return kExitOk;
  }
  if (command == "--version") {
    out << kToolVersion << '\n';
    return kExitOk;
  }
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  Context ctx(out, err);
  try {
    if (command == "losses") return cmd_losses(rest, ctx);
    if (command == "train") return cmd_train(rest, ctx);
    if (command == "bandit") return cmd_bandit(rest, ctx);
    if (command == "gaussians") return cmd_gaussians(rest, ctx);
    if (command == "rewards") return cmd_rewards(rest, ctx);
    if (command == "goodhart") return cmd_goodhart(rest, ctx);
    if (command == "check") return cmd_check(rest, ctx);
  } catch (const CLI::ParseError& e) {
    err << "gpo-lab " << command << ": " << e.what() << '\n';
    return kExitInvalid;
  } catch (const NumericError& e) {
    err << "gpo-lab " << command << ": numeric divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const UnboundedObjectiveError& e) {
    err << "gpo-lab " << command << ": numeric divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "gpo-lab " << command << ": " << e.what() << '\n';
    return kExitInvalid;
  }
  err << "gpo-lab: unknown command '" << command << "'\n\n" << usage();
  return kExitUsage;
}

}  // namespace gpo::cli
