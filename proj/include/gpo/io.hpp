#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gpo/config.hpp"
#include "gpo/errors.hpp"
#include "gpo/gaussian.hpp"
#include "gpo/goodhart.hpp"
#include "gpo/policy.hpp"
#include "gpo/reward.hpp"

// JSON encodings of the library's value types:
//   policy      {"contexts": C, "actions": A, "logits": [[...], ...]}
//   dataset     {"pairs": [[context, winner, loser], ...], "weights": [...]}   weights optional
//   preferences {"p": [[...], ...]}

namespace gpo {

namespace detail {

inline const Json& require_key(const Json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(std::string(what) + " is missing \"" + key + "\"");
  }
  return j.at(key);
}

inline Eigen::MatrixXd matrix_from_json(const Json& rows, const char* what) {
  if (!rows.is_array() || rows.empty()) throw ConfigError(std::string(what) + " must be a nonempty array of rows");
  const std::size_t cols = rows.front().is_array() ? rows.front().size() : 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != cols) {
      throw DimensionError(std::string(what) + " rows must all have " + std::to_string(cols) + " entries");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!rows[i][k].is_number()) throw ConfigError(std::string(what) + " entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k].get<double>();
    }
  }
  return m;
}

template <typename Matrix>
Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline Json policy_to_json(const SoftmaxPolicy& policy) {
  return {{"contexts", policy.contexts()},
          {"actions", policy.actions()},
          {"logits", detail::matrix_to_json(policy.logits())}};
}

inline SoftmaxPolicy policy_from_json(const Json& j) {
  Logits logits = detail::matrix_from_json(detail::require_key(j, "logits", "policy"), "policy logits");
  if (j.contains("contexts") && j.at("contexts").get<std::size_t>() != static_cast<std::size_t>(logits.rows())) {
    throw DimensionError("policy \"contexts\" disagrees with the logits");
  }
  if (j.contains("actions") && j.at("actions").get<std::size_t>() != static_cast<std::size_t>(logits.cols())) {
    throw DimensionError("policy \"actions\" disagrees with the logits");
  }
  return SoftmaxPolicy(std::move(logits));
}

inline Json dataset_to_json(const PreferenceDataset& data) {
  Json pairs = Json::array();
  for (const auto& p : data.pairs()) pairs.push_back({p.context, p.winner, p.loser});
  return {{"pairs", std::move(pairs)}, {"weights", data.weights()}};
}

inline PreferenceDataset dataset_from_json(const Json& j) {
  const Json& raw = detail::require_key(j, "pairs", "dataset");
  if (!raw.is_array()) throw ConfigError("dataset \"pairs\" must be an array");
  std::vector<PreferencePair> pairs;
  for (const auto& p : raw) {
    if (!p.is_array() || p.size() != 3) throw ConfigError("each pair must be [context, winner, loser]");
    for (const auto& v : p) {
      if (!v.is_number_unsigned()) throw ConfigError("pair entries must be nonnegative integers");
    }
    pairs.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>(), p[2].get<std::size_t>()});
  }
  if (!j.contains("weights")) return PreferenceDataset::uniform(std::move(pairs));
  return PreferenceDataset(std::move(pairs), j.at("weights").get<std::vector<double>>());
}

inline Json preferences_to_json(const PreferenceMatrix& prefs) {
  return {{"p", detail::matrix_to_json(prefs.matrix())}};
}

inline PreferenceMatrix preferences_from_json(const Json& j) {
  return PreferenceMatrix(detail::matrix_from_json(detail::require_key(j, "p", "preference matrix"),
                                                   "preference matrix"));
}

inline Json mixture_to_json(const GaussianMixture& m) {
  return {{"weights", m.weights}, {"means", m.means}, {"stds", m.stds}};
}

inline Json instance_to_json(const GoldenInstance& inst) {
  Json prefs = Json::array();
  for (const auto& p : inst.golden_prefs) prefs.push_back(preferences_to_json(p));
  return {{"seed", inst.seed},
          {"params",
           {{"contexts", inst.params.contexts},
            {"actions", inst.params.actions},
            {"reward_scale", inst.params.reward_scale},
            {"behavior_scale", inst.params.behavior_scale},
            {"dataset_size", inst.params.dataset_size},
            {"temperature", inst.params.temperature}}},
          {"golden_reward", detail::matrix_to_json(inst.golden_reward)},
          {"golden_preferences", std::move(prefs)},
          {"golden_policy", policy_to_json(inst.golden_policy)},
          {"behavior", policy_to_json(inst.behavior)},
          {"dataset", dataset_to_json(inst.dataset)}};
}

inline Json load_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + '\n');
}

}  // namespace gpo
