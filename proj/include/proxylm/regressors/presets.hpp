#pragma once

#include <map>
#include <string>
#include <vector>

#include "proxylm/error.hpp"
#include "proxylm/regressors/model.hpp"

namespace proxylm {

// Regressor settings reported for the original experiments. For XGBoost,
// n_estimators and eta were the upper ends of the search; LightGBM's
// learning_rate and num_leaves likewise, and MF's alpha. They are used here
// as fixed values.

namespace preset_detail {

inline GbtParams xgb(int n_estimators, double min_child_weight, int max_depth, double gamma, double subsample,
                     double colsample, double alpha, double lambda) {
  GbtParams p;
  p.n_estimators = n_estimators;
  p.eta = 0.1;
  p.min_child_weight = min_child_weight;
  p.max_depth = max_depth;
  p.gamma = gamma;
  p.subsample = subsample;
  p.colsample_bytree = colsample;
  p.reg_alpha = alpha;
  p.reg_lambda = lambda;
  p.growth = TreeGrowth::depth_wise;
  return p;
}

}  // namespace preset_detail

inline const std::map<std::string, RegressorParams>& presets() {
  using preset_detail::xgb;
  static const std::map<std::string, RegressorParams> table = [] {
    std::map<std::string, RegressorParams> t;
    // MT, English-centric, spBLEU
    t["mt_english_m2m100"] = xgb(5000, 5.0, 5, 0.0, 0.6, 0.83, 0.2, 0.1);
    t["mt_english_nllb"] = xgb(5000, 4.2, 4, 0.0, 0.94, 0.82, 0.32, 0.37);
    // MT, English-centric, COMET
    t["mt_english_m2m100_comet"] = xgb(5000, 3.2, 3, 0.0, 0.6, 0.9, 0.11, 0.48);
    t["mt_english_nllb_comet"] = xgb(5000, 1.1, 5, 0.0, 1.0, 0.86, 0.0, 0.05);
    // MT, many-to-many
    t["mt_many_m2m100"] = xgb(2000, 5.0, 3, 0.0, 0.7, 0.6, 0.0, 0.35);
    t["mt_many_nllb"] = xgb(2000, 2.5, 3, 0.0, 0.9, 0.6, 0.0, 0.15);
    // Intent classification and slot filling
    t["intent_aya"] = xgb(5000, 3.0, 3, 0.1, 0.85, 1.0, 0.1, 0.2);
    t["intent_llama"] = xgb(5000, 3.0, 3, 0.1, 0.6, 0.95, 0.1, 0.5);

    PolyParams poly;
    poly.degree = 2;
    poly.alpha = 0.1;
    poly.l1_ratio = 0.9;
    t["poly_default"] = poly;
    poly.degree = 3;
    t["poly3_default"] = poly;

    GbtParams lgbm;
    lgbm.growth = TreeGrowth::leaf_wise;
    lgbm.eta = 0.3;
    lgbm.num_leaves = 64;
    lgbm.n_estimators = 100;
    lgbm.max_bin = 200000;
    lgbm.max_depth = 10;
    lgbm.min_child_weight = 0.001;
    lgbm.min_child_samples = 20;
    lgbm.gamma = 0.0;
    lgbm.colsample_bytree = 1.0;
    lgbm.subsample = 1.0;
    lgbm.reg_alpha = 0.1;
    lgbm.reg_lambda = 0.1;
    t["lgbm_default"] = lgbm;

    MfParams mf;
    mf.latent_dim = 4;
    mf.alpha = 0.01;
    mf.beta_w = 0.1;
    mf.beta_h = 0.1;
    mf.beta_z = 0.01;
    mf.beta_s = 0.01;
    mf.beta_t = 0.01;
    mf.lr_decay = 0.001;
    mf.iterations = 2000;
    t["mf_default"] = mf;
    return t;
  }();
  return table;
}

inline const RegressorParams& preset(const std::string& name) {
  const auto& t = presets();
  auto it = t.find(name);
  if (it == t.end()) {
    std::string known;
    for (const auto& [k, v] : t) known += (known.empty() ? "" : ", ") + k;
    throw Error(ErrorCode::invalid_argument, "unknown preset '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

}  // namespace proxylm
