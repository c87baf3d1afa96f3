#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "proxylm/error.hpp"
#include "proxylm/random.hpp"
#include "proxylm/records.hpp"
#include "proxylm/regressors/standardize.hpp"

namespace proxylm {

/// Matrix factorization over (source, target) language cells with a linear
/// term on context features:
///
///   y(s, t, c) = mu + b_s + b_t + w_s . h_t + theta . c
///
/// beta_w, beta_h, beta_z, beta_s and beta_t are L2 weights on w, h, theta,
/// b_s and b_t. Each block is penalized once per epoch: a parameter touched by
/// k records receives beta / k of its penalty gradient per touch.
struct MfParams {
  int latent_dim = 4;
  double alpha = 0.01;  // initial learning rate
  double beta_w = 0.1;
  double beta_h = 0.1;
  double beta_z = 0.01;
  double beta_s = 0.01;
  double beta_t = 0.01;
  double lr_decay = 0.001;
  int iterations = 2000;
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& w) { return Error(ErrorCode::invalid_argument, "MfParams: " + w); };
    if (latent_dim < 0) throw bad("latent_dim must be >= 0");
    if (!(alpha > 0.0)) throw bad("alpha must be > 0");
    if (beta_w < 0 || beta_h < 0 || beta_z < 0 || beta_s < 0 || beta_t < 0) throw bad("betas must be >= 0");
    if (lr_decay < 0) throw bad("lr_decay must be >= 0");
    if (iterations < 0) throw bad("iterations must be >= 0");
  }
};

struct MfModel {
  MfParams params;
  double global_mean = 0.0;
  std::map<std::string, std::size_t> source_index;
  std::map<std::string, std::size_t> target_index;
  std::vector<std::vector<double>> source_factors;  // w
  std::vector<std::vector<double>> target_factors;  // h
  std::vector<double> source_bias;
  std::vector<double> target_bias;
  std::vector<double> context_weights;  // theta, over standardized context columns
  Standardizer standardizer;
  std::vector<std::string> feature_names;
  std::string schema_fingerprint;
  double training_rmse = 0.0;

  /// Model equation for an already standardized context vector.
  double predict(const std::string& source, const std::string& target, std::span<const double> context) const {
    auto s = source_index.find(source);
    if (s == source_index.end()) throw Error(ErrorCode::unknown_language, "source language '" + source + "' not seen in training");
    auto t = target_index.find(target);
    if (t == target_index.end()) throw Error(ErrorCode::unknown_language, "target language '" + target + "' not seen in training");
    if (context.size() != context_weights.size())
      throw Error(ErrorCode::dim_mismatch, "context has " + std::to_string(context.size()) + " values, model expects " +
                                               std::to_string(context_weights.size()));
    return evaluate(s->second, t->second, context);
  }

  double evaluate(std::size_t s, std::size_t t, std::span<const double> context) const {
    const auto& w = source_factors[s];
    const auto& h = target_factors[t];
    double dot = 0.0;
    for (std::size_t f = 0; f < w.size(); ++f) dot += w[f] * h[f];
    double ctx = 0.0;
    for (std::size_t j = 0; j < context.size(); ++j) ctx += context_weights[j] * context[j];
    return global_mean + source_bias[s] + target_bias[t] + dot + ctx;
  }
};

/// True when the records fill a two-dimensional language grid: at least two
/// sources paired with two or more targets each, and at least two targets
/// paired with two or more sources each. English-centric data fails this since
/// only English pairs with more than one partner.
inline bool is_many_to_many(std::span<const std::string> sources, std::span<const std::string> targets) {
  std::map<std::string, std::set<std::string>> by_src, by_tgt;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    by_src[sources[i]].insert(targets[i]);
    by_tgt[targets[i]].insert(sources[i]);
  }
  auto wide = [](const auto& m) {
    std::size_t k = 0;
    for (const auto& [lang, partners] : m) k += partners.size() >= 2 ? 1 : 0;
    return k;
  };
  return wide(by_src) >= 2 && wide(by_tgt) >= 2;
}

/// SGD training without the structural precondition. Rows are visited in a
/// fresh seeded shuffle each epoch with learning rate alpha / (1 + lr_decay * epoch).
inline MfModel mf_train(const DesignMatrix& m, const MfParams& params) {
  params.validate();
  if (m.n == 0) throw Error(ErrorCode::empty_training_set, "cannot fit MF on zero rows");

  MfModel model;
  model.params = params;
  model.feature_names = m.schema.names();
  model.schema_fingerprint = m.schema.fingerprint();
  model.standardizer = Standardizer::fit(m);
  model.global_mean = std::accumulate(m.targets.begin(), m.targets.end(), 0.0) / static_cast<double>(m.n);

  for (std::size_t i = 0; i < m.n; ++i) {
    model.source_index.try_emplace(m.src_langs[i], 0);
    model.target_index.try_emplace(m.tgt_langs[i], 0);
  }
  std::size_t k = 0;
  for (auto& [lang, idx] : model.source_index) idx = k++;
  k = 0;
  for (auto& [lang, idx] : model.target_index) idx = k++;

  const auto n_src = model.source_index.size();
  const auto n_tgt = model.target_index.size();
  const auto dim = static_cast<std::size_t>(params.latent_dim);
  Rng rng(params.seed);
  model.source_factors.assign(n_src, std::vector<double>(dim));
  model.target_factors.assign(n_tgt, std::vector<double>(dim));
  for (auto& w : model.source_factors)
    for (auto& v : w) v = rng.uniform(-0.01, 0.01);
  for (auto& h : model.target_factors)
    for (auto& v : h) v = rng.uniform(-0.01, 0.01);
  model.source_bias.assign(n_src, 0.0);
  model.target_bias.assign(n_tgt, 0.0);
  model.context_weights.assign(m.d(), 0.0);

  std::vector<std::size_t> src(m.n), tgt(m.n);
  std::vector<double> src_count(n_src, 0.0), tgt_count(n_tgt, 0.0);
  std::vector<std::vector<double>> context(m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    src[i] = model.source_index.at(m.src_langs[i]);
    tgt[i] = model.target_index.at(m.tgt_langs[i]);
    src_count[src[i]] += 1.0;
    tgt_count[tgt[i]] += 1.0;
    context[i] = model.standardizer.transform(m, i);
  }
  const double n_rows = static_cast<double>(m.n);

  std::vector<std::size_t> order(m.n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < params.iterations; ++epoch) {
    const double lr = params.alpha / (1.0 + params.lr_decay * epoch);
    rng.shuffle(std::span<std::size_t>(order));
    for (auto i : order) {
      const auto s = src[i], t = tgt[i];
      const double e = m.targets[i] - model.evaluate(s, t, context[i]);
      auto& bs = model.source_bias[s];
      auto& bt = model.target_bias[t];
      bs += lr * (e - params.beta_s * bs / src_count[s]);
      bt += lr * (e - params.beta_t * bt / tgt_count[t]);
      auto& w = model.source_factors[s];
      auto& h = model.target_factors[t];
      for (std::size_t f = 0; f < dim; ++f) {
        const double wf = w[f];
        w[f] += lr * (e * h[f] - params.beta_w * wf / src_count[s]);
        h[f] += lr * (e * wf - params.beta_h * h[f] / tgt_count[t]);
      }
      auto& theta = model.context_weights;
      for (std::size_t j = 0; j < theta.size(); ++j)
        theta[j] += lr * (e * context[i][j] - params.beta_z * theta[j] / n_rows);
    }
  }

  double ss = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double r = m.targets[i] - model.evaluate(src[i], tgt[i], context[i]);
    ss += r * r;
  }
  model.training_rmse = std::sqrt(ss / n_rows);
  return model;
}

/// Fits MF; requires a many-to-many language grid.
inline MfModel mf_fit(const DesignMatrix& m, const MfParams& params) {
  if (m.n == 0) throw Error(ErrorCode::empty_training_set, "cannot fit MF on zero rows");
  if (!is_many_to_many(m.src_langs, m.tgt_langs))
    throw Error(ErrorCode::not_many_to_many,
                "MF needs records spread over both source and target languages; this looks like a one-hub "
                "(e.g. English-centric) layout");
  return mf_train(m, params);
}

inline std::vector<double> mf_predict(const MfModel& model, const DesignMatrix& m) {
  if (m.schema.fingerprint() != model.schema_fingerprint)
    throw Error(ErrorCode::schema_mismatch, "matrix schema does not match MF model");
  std::vector<double> out(m.n);
  for (std::size_t i = 0; i < m.n; ++i)
    out[i] = model.predict(m.src_langs[i], m.tgt_langs[i], model.standardizer.transform(m, i));
  return out;
}

}  // namespace proxylm
