#pragma once

#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "proxylm/error.hpp"
#include "proxylm/records.hpp"
#include "proxylm/regressors/gbt.hpp"
#include "proxylm/regressors/mf.hpp"
#include "proxylm/regressors/poly.hpp"

namespace proxylm {

using RegressorParams = std::variant<GbtParams, PolyParams, MfParams>;
using RegressorModel = std::variant<GbtModel, PolyModel, MfModel>;

inline RegressorModel fit(const DesignMatrix& m, const RegressorParams& params) {
  return std::visit(
      [&](const auto& p) -> RegressorModel {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, GbtParams>) return gbt_fit(m, p);
        else if constexpr (std::is_same_v<P, PolyParams>) return poly_fit(m, p);
        else return mf_fit(m, p);
      },
      params);
}

inline std::vector<double> predict(const RegressorModel& model, const DesignMatrix& m) {
  return std::visit(
      [&](const auto& md) -> std::vector<double> {
        using M = std::decay_t<decltype(md)>;
        if constexpr (std::is_same_v<M, GbtModel>) return gbt_predict(md, m);
        else if constexpr (std::is_same_v<M, PolyModel>) return poly_predict(md, m);
        else return mf_predict(md, m);
      },
      model);
}

/// Seeds every stochastic component of the parameters.
inline RegressorParams with_seed(RegressorParams params, std::uint64_t seed) {
  std::visit(
      [&](auto& p) {
        if constexpr (requires { p.seed; }) p.seed = seed;
      },
      params);
  return params;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const GbtParams& p) {
  nlohmann::json j = {{"kind", "gbt"},
                      {"n_estimators", p.n_estimators},
                      {"eta", p.eta},
                      {"min_child_weight", p.min_child_weight},
                      {"max_depth", p.max_depth},
                      {"gamma", p.gamma},
                      {"subsample", p.subsample},
                      {"colsample_bytree", p.colsample_bytree},
                      {"reg_alpha", p.reg_alpha},
                      {"reg_lambda", p.reg_lambda},
                      {"growth", p.growth == TreeGrowth::depth_wise ? "depth_wise" : "leaf_wise"},
                      {"min_child_samples", p.min_child_samples},
                      {"max_bin", p.max_bin},
                      {"seed", p.seed}};
  j["num_leaves"] = p.num_leaves ? nlohmann::json(*p.num_leaves) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const PolyParams& p) {
  return {{"kind", "poly"},          {"degree", p.degree},       {"alpha", p.alpha}, {"l1_ratio", p.l1_ratio},
          {"max_iterations", p.max_iterations}, {"tolerance", p.tolerance}};
}

inline nlohmann::json to_json(const MfParams& p) {
  return {{"kind", "mf"},          {"latent_dim", p.latent_dim}, {"alpha", p.alpha},   {"beta_w", p.beta_w},
          {"beta_h", p.beta_h},    {"beta_z", p.beta_z},         {"beta_s", p.beta_s}, {"beta_t", p.beta_t},
          {"lr_decay", p.lr_decay}, {"iterations", p.iterations}, {"seed", p.seed}};
}

inline nlohmann::json to_json(const RegressorParams& p) {
  return std::visit([](const auto& x) { return to_json(x); }, p);
}

namespace model_detail {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") continue;
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::parse_error, "unknown hyperparameter '" + key + "'");
  }
}

}  // namespace model_detail

/// Applies JSON overrides onto `base`. Unknown keys are rejected.
inline GbtParams apply_overrides(GbtParams p, const nlohmann::json& j) {
  using model_detail::read;
  model_detail::check_keys(j, {"n_estimators", "eta", "learning_rate", "min_child_weight", "max_depth", "gamma",
                               "min_split_gain", "subsample", "colsample_bytree", "reg_alpha", "reg_lambda", "growth",
                               "num_leaves", "min_child_samples", "max_bin", "seed"});
  read(j, "n_estimators", p.n_estimators);
  read(j, "eta", p.eta);
  read(j, "learning_rate", p.eta);
  read(j, "min_child_weight", p.min_child_weight);
  read(j, "max_depth", p.max_depth);
  read(j, "gamma", p.gamma);
  read(j, "min_split_gain", p.gamma);
  read(j, "subsample", p.subsample);
  read(j, "colsample_bytree", p.colsample_bytree);
  read(j, "reg_alpha", p.reg_alpha);
  read(j, "reg_lambda", p.reg_lambda);
  read(j, "min_child_samples", p.min_child_samples);
  read(j, "max_bin", p.max_bin);
  read(j, "seed", p.seed);
  if (j.contains("growth")) {
    const auto g = j["growth"].get<std::string>();
    if (g == "depth_wise") p.growth = TreeGrowth::depth_wise;
    else if (g == "leaf_wise") p.growth = TreeGrowth::leaf_wise;
    else throw Error(ErrorCode::parse_error, "unknown growth '" + g + "'");
  }
  if (j.contains("num_leaves")) {
    if (j["num_leaves"].is_null()) p.num_leaves.reset();
    else p.num_leaves = j["num_leaves"].get<int>();
  }
  p.validate();
  return p;
}

inline PolyParams apply_overrides(PolyParams p, const nlohmann::json& j) {
  using model_detail::read;
  model_detail::check_keys(j, {"degree", "alpha", "l1_ratio", "max_iterations", "tolerance"});
  read(j, "degree", p.degree);
  read(j, "alpha", p.alpha);
  read(j, "l1_ratio", p.l1_ratio);
  read(j, "max_iterations", p.max_iterations);
  read(j, "tolerance", p.tolerance);
  p.validate();
  return p;
}

inline MfParams apply_overrides(MfParams p, const nlohmann::json& j) {
  using model_detail::read;
  model_detail::check_keys(j, {"latent_dim", "alpha", "beta_w", "beta_h", "beta_z", "beta_s", "beta_t", "lr_decay",
                               "iterations", "seed"});
  read(j, "latent_dim", p.latent_dim);
  read(j, "alpha", p.alpha);
  read(j, "beta_w", p.beta_w);
  read(j, "beta_h", p.beta_h);
  read(j, "beta_z", p.beta_z);
  read(j, "beta_s", p.beta_s);
  read(j, "beta_t", p.beta_t);
  read(j, "lr_decay", p.lr_decay);
  read(j, "iterations", p.iterations);
  read(j, "seed", p.seed);
  p.validate();
  return p;
}

inline RegressorParams apply_overrides(const RegressorParams& base, const nlohmann::json& j) {
  return std::visit([&](const auto& p) -> RegressorParams { return apply_overrides(p, j); }, base);
}

inline RegressorParams params_from_json(const nlohmann::json& j) {
  const auto kind = j.value("kind", std::string());
  nlohmann::json rest = j;
  rest.erase("kind");
  if (kind == "gbt") return apply_overrides(GbtParams{}, rest);
  if (kind == "poly") return apply_overrides(PolyParams{}, rest);
  if (kind == "mf") return apply_overrides(MfParams{}, rest);
  throw Error(ErrorCode::parse_error, "unknown regressor kind '" + kind + "'");
}

inline std::string kind_name(const RegressorModel& m) {
  return std::visit(
      [](const auto& md) -> std::string {
        using M = std::decay_t<decltype(md)>;
        if constexpr (std::is_same_v<M, GbtModel>) return "gbt";
        else if constexpr (std::is_same_v<M, PolyModel>) return "poly";
        else return "mf";
      },
      m);
}

namespace model_detail {

inline nlohmann::json standardizer_json(const Standardizer& s) { return {{"mean", s.mean}, {"scale", s.scale}}; }

inline Standardizer standardizer_from(const nlohmann::json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>()};
}

inline nlohmann::json body(const GbtModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   default_left = nlohmann::json::array(), left = nlohmann::json::array(),
                   right = nlohmann::json::array(), weight = nlohmann::json::array(), gain = nlohmann::json::array(),
                   cover = nlohmann::json::array(), depth = nlohmann::json::array();
    for (const auto& nd : t.nodes) {
      feature.push_back(nd.feature);
      threshold.push_back(nd.threshold);
      default_left.push_back(nd.default_left);
      left.push_back(nd.left);
      right.push_back(nd.right);
      weight.push_back(nd.weight);
      gain.push_back(nd.gain);
      cover.push_back(nd.cover);
      depth.push_back(nd.depth);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"default_left", default_left},
                     {"left", left},
                     {"right", right},
                     {"weight", weight},
                     {"gain", gain},
                     {"cover", cover},
                     {"depth", depth}});
  }
  return {{"base_score", m.base_score}, {"eta", m.eta}, {"trees", trees}, {"training_rmse", m.training_rmse}};
}

inline nlohmann::json body(const PolyModel& m) {
  return {{"intercept", m.intercept},
          {"coefficients", m.coefficients},
          {"standardizer", standardizer_json(m.standardizer)},
          {"converged", m.converged},
          {"iterations", m.iterations}};
}

inline nlohmann::json body(const MfModel& m) {
  nlohmann::json sources = nlohmann::json::array(), targets = nlohmann::json::array();
  for (const auto& [lang, idx] : m.source_index) sources.push_back(lang);
  for (const auto& [lang, idx] : m.target_index) targets.push_back(lang);
  return {{"global_mean", m.global_mean},
          {"sources", sources},
          {"targets", targets},
          {"source_factors", m.source_factors},
          {"target_factors", m.target_factors},
          {"source_bias", m.source_bias},
          {"target_bias", m.target_bias},
          {"context_weights", m.context_weights},
          {"standardizer", standardizer_json(m.standardizer)},
          {"training_rmse", m.training_rmse}};
}

}  // namespace model_detail

/// Self-describing model document: kind, params, schema (fingerprint and
/// columns) and fitted parameters. Doubles round-trip exactly.
inline nlohmann::json model_to_json(const RegressorModel& model, const FeatureSchema& schema) {
  return std::visit(
      [&](const auto& m) {
        if (m.schema_fingerprint != schema.fingerprint())
          throw Error(ErrorCode::schema_mismatch, "schema does not belong to this model");
        nlohmann::json cols = nlohmann::json::array();
        for (const auto& c : schema.columns()) cols.push_back({{"name", c.name}, {"group", to_string(c.group)}});
        return nlohmann::json{{"format", "proxylm-model"},
                              {"version", 1},
                              {"kind", kind_name(model)},
                              {"params", to_json(m.params)},
                              {"schema", {{"fingerprint", m.schema_fingerprint}, {"columns", cols}}},
                              {"model", model_detail::body(m)}};
      },
      model);
}

struct LoadedModel {
  RegressorModel model;
  FeatureSchema schema;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "proxylm-model")
      throw Error(ErrorCode::parse_error, "not a proxylm model document");
    std::vector<FeatureColumn> cols;
    for (const auto& c : j.at("schema").at("columns")) {
      auto g = parse_feature_group(c.at("group").get<std::string>());
      if (!g) throw Error(ErrorCode::parse_error, "bad column group");
      cols.push_back({c.at("name").get<std::string>(), *g});
    }
    auto schema = FeatureSchema::from_columns(std::move(cols));
    const auto fingerprint = j.at("schema").at("fingerprint").get<std::string>();
    if (fingerprint != schema.fingerprint())
      throw Error(ErrorCode::schema_mismatch, "stored fingerprint does not match stored columns");
    const auto params = params_from_json(j.at("params"));
    const auto& b = j.at("model");
    const auto kind = j.at("kind").get<std::string>();
    auto names = schema.names();

    if (kind == "gbt") {
      GbtModel m;
      m.params = std::get<GbtParams>(params);
      m.base_score = b.at("base_score").get<double>();
      m.eta = b.at("eta").get<double>();
      m.training_rmse = b.at("training_rmse").get<std::vector<double>>();
      for (const auto& t : b.at("trees")) {
        RegressionTree tree;
        const auto feature = t.at("feature").get<std::vector<int>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto default_left = t.at("default_left").get<std::vector<bool>>();
        const auto left = t.at("left").get<std::vector<int>>();
        const auto right = t.at("right").get<std::vector<int>>();
        const auto weight = t.at("weight").get<std::vector<double>>();
        const auto gain = t.at("gain").get<std::vector<double>>();
        const auto cover = t.at("cover").get<std::vector<double>>();
        const auto depth = t.at("depth").get<std::vector<int>>();
        const auto count = feature.size();
        for (std::size_t k = 0; k < count; ++k) {
          TreeNode nd{feature[k], threshold.at(k), default_left.at(k), left.at(k), right.at(k),
                      weight.at(k), gain.at(k),    cover.at(k),        depth.at(k)};
          const auto size = static_cast<int>(count);
          if (nd.feature >= static_cast<int>(names.size()) ||
              (!nd.is_leaf() && (nd.left <= 0 || nd.right <= 0 || nd.left >= size || nd.right >= size)))
            throw Error(ErrorCode::parse_error, "malformed tree node");
          tree.nodes.push_back(nd);
        }
        if (tree.nodes.empty()) throw Error(ErrorCode::parse_error, "empty tree");
        m.trees.push_back(std::move(tree));
      }
      m.feature_names = std::move(names);
      m.schema_fingerprint = fingerprint;
      return {std::move(m), std::move(schema)};
    }
    if (kind == "poly") {
      PolyModel m;
      m.params = std::get<PolyParams>(params);
      m.intercept = b.at("intercept").get<double>();
      m.coefficients = b.at("coefficients").get<std::vector<double>>();
      m.standardizer = model_detail::standardizer_from(b.at("standardizer"));
      m.converged = b.at("converged").get<bool>();
      m.iterations = b.at("iterations").get<int>();
      if (m.coefficients.size() != polynomial_terms(names.size(), m.params.degree).size())
        throw Error(ErrorCode::parse_error, "coefficient count does not match polynomial expansion");
      m.feature_names = std::move(names);
      m.schema_fingerprint = fingerprint;
      return {std::move(m), std::move(schema)};
    }
    if (kind == "mf") {
      MfModel m;
      m.params = std::get<MfParams>(params);
      m.global_mean = b.at("global_mean").get<double>();
      const auto sources = b.at("sources").get<std::vector<std::string>>();
      const auto targets = b.at("targets").get<std::vector<std::string>>();
      for (std::size_t k = 0; k < sources.size(); ++k) m.source_index[sources[k]] = k;
      for (std::size_t k = 0; k < targets.size(); ++k) m.target_index[targets[k]] = k;
      m.source_factors = b.at("source_factors").get<std::vector<std::vector<double>>>();
      m.target_factors = b.at("target_factors").get<std::vector<std::vector<double>>>();
      m.source_bias = b.at("source_bias").get<std::vector<double>>();
      m.target_bias = b.at("target_bias").get<std::vector<double>>();
      m.context_weights = b.at("context_weights").get<std::vector<double>>();
      m.standardizer = model_detail::standardizer_from(b.at("standardizer"));
      m.training_rmse = b.at("training_rmse").get<double>();
      if (m.source_factors.size() != sources.size() || m.target_factors.size() != targets.size() ||
          m.source_bias.size() != sources.size() || m.target_bias.size() != targets.size() ||
          m.context_weights.size() != names.size())
        throw Error(ErrorCode::parse_error, "MF parameter shapes are inconsistent");
      m.feature_names = std::move(names);
      m.schema_fingerprint = fingerprint;
      return {std::move(m), std::move(schema)};
    }
    throw Error(ErrorCode::parse_error, "unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
}

}  // namespace proxylm
