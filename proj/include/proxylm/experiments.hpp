#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "proxylm/error.hpp"
#include "proxylm/random.hpp"
#include "proxylm/records.hpp"
#include "proxylm/regressors/model.hpp"

namespace proxylm {

// ---------------------------------------------------------------------------
// Metrics

inline double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw Error(ErrorCode::length_mismatch, std::to_string(predictions.size()) + " predictions for " +
                                                std::to_string(targets.size()) + " targets");
  if (targets.empty()) throw Error(ErrorCode::empty, "RMSE of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = predictions[i] - targets[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(targets.size()));
}

/// Interquartile mean: drop floor(n/4) values from each end of the sorted list.
inline double iqm(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::empty, "IQM of an empty list");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto cut = v.size() / 4;
  const auto first = v.begin() + static_cast<std::ptrdiff_t>(cut);
  const auto last = v.end() - static_cast<std::ptrdiff_t>(cut);
  return std::accumulate(first, last, 0.0) / static_cast<double>(last - first);
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitKind { random, lolo, unseen, cross_dataset };

constexpr std::string_view to_string(SplitKind k) {
  switch (k) {
    case SplitKind::random: return "random";
    case SplitKind::lolo: return "lolo";
    case SplitKind::unseen: return "unseen";
    case SplitKind::cross_dataset: return "cross_dataset";
  }
  return "";
}

inline std::optional<SplitKind> parse_split_kind(std::string_view s) {
  if (s == "random") return SplitKind::random;
  if (s == "lolo") return SplitKind::lolo;
  if (s == "unseen") return SplitKind::unseen;
  if (s == "cross_dataset") return SplitKind::cross_dataset;
  return std::nullopt;
}

struct SplitSpec {
  SplitKind kind = SplitKind::random;
  double ratio = 0.7;                            // random only
  std::optional<std::string> held_out_language;  // lolo only; all languages when unset
  std::uint64_t seed = 0;

  void validate() const {
    if (kind == SplitKind::random && !(ratio > 0.0 && ratio < 1.0))
      throw Error(ErrorCode::invalid_argument, "split ratio must be in (0, 1)");
    if (kind != SplitKind::lolo && held_out_language)
      throw Error(ErrorCode::invalid_argument, "held_out_language applies to lolo splits only");
  }
};

/// Train and test row indices into some record list.
struct IndexSplit {
  std::string label;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// floor(ratio * n) training rows after a seeded shuffle. A 1e-9 guard keeps
/// products such as 0.7 * 90 (62.999...) from rounding down below the integer they denote.
inline IndexSplit random_split_indices(std::size_t n, double ratio, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorCode::too_few_records, "random split needs at least 2 records");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::invalid_argument, "split ratio must be in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  IndexSplit s{"random", {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)},
               {order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end()}};
  return s;
}

/// Languages that can be held out: every language except those present in
/// every record (English in English-centric data).
inline std::vector<std::string> lolo_languages(std::span<const PerformanceRecord> records) {
  std::map<std::string, std::size_t> touches;
  for (const auto& r : records) {
    ++touches[r.src_lang];
    if (r.tgt_lang != r.src_lang) ++touches[r.tgt_lang];
  }
  std::vector<std::string> out;
  for (const auto& [lang, count] : touches)
    if (count < records.size()) out.push_back(lang);
  return out;
}

inline std::vector<IndexSplit> lolo_split_indices(std::span<const PerformanceRecord> records,
                                                  const std::optional<std::string>& only = std::nullopt) {
  const auto langs = lolo_languages(records);
  if (langs.size() < 2)
    throw Error(ErrorCode::too_few_languages, "leave-one-language-out needs at least 2 languages that can be held out");
  std::vector<IndexSplit> out;
  for (const auto& lang : langs) {
    if (only && lang != *only) continue;
    IndexSplit s{lang, {}, {}};
    for (std::size_t i = 0; i < records.size(); ++i)
      (records[i].src_lang == lang || records[i].tgt_lang == lang ? s.test : s.train).push_back(i);
    out.push_back(std::move(s));
  }
  if (only && out.empty())
    throw Error(ErrorCode::too_few_languages, "language '" + *only + "' cannot be held out");
  return out;
}

inline IndexSplit unseen_split_indices(std::span<const PerformanceRecord> records) {
  IndexSplit s{"unseen", {}, {}};
  for (std::size_t i = 0; i < records.size(); ++i)
    (records[i].seen_by_estimated_model ? s.train : s.test).push_back(i);
  if (s.train.empty() || s.test.empty())
    throw Error(ErrorCode::degenerate_split, "unseen split needs both seen and unseen records (seen=" +
                                                 std::to_string(s.train.size()) + ", unseen=" +
                                                 std::to_string(s.test.size()) + ")");
  return s;
}

using RecordSplit = std::pair<std::vector<PerformanceRecord>, std::vector<PerformanceRecord>>;

namespace exp_detail {
inline std::vector<PerformanceRecord> take(std::span<const PerformanceRecord> r, const std::vector<std::size_t>& idx) {
  std::vector<PerformanceRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(r[i]);
  return out;
}
}  // namespace exp_detail

inline RecordSplit split_random(std::span<const PerformanceRecord> records, double ratio, std::uint64_t seed) {
  auto s = random_split_indices(records.size(), ratio, seed);
  return {exp_detail::take(records, s.train), exp_detail::take(records, s.test)};
}

struct LoloSplit {
  std::string held_out_language;
  std::vector<PerformanceRecord> train;
  std::vector<PerformanceRecord> test;
};

inline std::vector<LoloSplit> split_lolo(std::span<const PerformanceRecord> records) {
  std::vector<LoloSplit> out;
  for (auto& s : lolo_split_indices(records))
    out.push_back({s.label, exp_detail::take(records, s.train), exp_detail::take(records, s.test)});
  return out;
}

inline RecordSplit split_unseen(std::span<const PerformanceRecord> records) {
  auto s = unseen_split_indices(records);
  return {exp_detail::take(records, s.train), exp_detail::take(records, s.test)};
}

/// Train on one record collection, test on another. Both must share a proxy roster.
inline RecordSplit split_cross_dataset(std::span<const PerformanceRecord> train, std::span<const PerformanceRecord> test) {
  if (train.empty() || test.empty())
    throw Error(ErrorCode::degenerate_split, "cross-dataset split needs non-empty train and test collections");
  if (proxy_roster(train) != proxy_roster(test))
    throw Error(ErrorCode::schema_mismatch, "train and test collections have different proxy rosters");
  return {{train.begin(), train.end()}, {test.begin(), test.end()}};
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Seeded shuffle cut into k folds; the first n % k folds hold one extra row.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::invalid_argument, "k-fold needs k >= 2");
  if (n < k) throw Error(ErrorCode::too_few_records, std::to_string(n) + " records cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const auto size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

struct CvResult {
  std::size_t best_index = 0;
  RegressorParams best_params;
  std::vector<double> mean_rmse;  // one per grid point
};

/// Mean validation RMSE of every grid point over k folds; lowest wins, ties go
/// to the earlier grid point.
inline CvResult kfold_cv(const DesignMatrix& train, std::size_t k, std::span<const RegressorParams> grid,
                         std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "hyperparameter grid is empty");
  const auto folds = kfold_indices(train.n, k, seed);
  CvResult out;
  out.mean_rmse.assign(grid.size(), 0.0);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> fit_rows;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) fit_rows.insert(fit_rows.end(), folds[g].begin(), folds[g].end());
    std::sort(fit_rows.begin(), fit_rows.end());
    std::vector<std::size_t> val_rows = folds[f];
    std::sort(val_rows.begin(), val_rows.end());
    const auto fit_m = train.select(fit_rows);
    const auto val_m = train.select(val_rows);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto model = fit(fit_m, grid[g]);
      out.mean_rmse[g] += rmse(predict(model, val_m), val_m.targets);
    }
  }
  for (auto& v : out.mean_rmse) v /= static_cast<double>(k);
  out.best_index = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (out.mean_rmse[g] < out.mean_rmse[out.best_index]) out.best_index = g;
  out.best_params = grid[out.best_index];
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  std::vector<PerformanceRecord> records;
  std::vector<PerformanceRecord> test_records;  // cross_dataset only
  FeatureSources sources;
  std::optional<std::string> estimated_model;
  std::vector<RegressorParams> grid;
  FeatureGroups groups;
  std::optional<std::vector<std::string>> proxies;  // unset = ensemble of every proxy in the roster
  SplitSpec split;
  std::size_t repeats = 5;
  std::size_t cv_folds = 10;
  std::size_t threads = 1;  // 0 = hardware concurrency; never changes results

  void validate() const {
    if (!groups.any()) throw Error(ErrorCode::invalid_argument, "at least one feature group must be enabled");
    if (repeats < 1) throw Error(ErrorCode::invalid_argument, "repeats must be >= 1");
    if (cv_folds < 2) throw Error(ErrorCode::invalid_argument, "cv_folds must be >= 2");
    if (grid.empty()) throw Error(ErrorCode::invalid_argument, "regressor grid is empty");
    split.validate();
  }
};

struct PredictionRow {
  std::string record_id;
  double truth = 0.0;
  double prediction = 0.0;
  std::string split_label;  // held-out language for LOLO
};

struct ExperimentResult {
  std::vector<double> per_repeat_rmse;
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<std::vector<RegressorParams>> chosen_params;  // per repeat, per split unit
  std::vector<std::vector<std::vector<double>>> cv_scores;  // per repeat, per split unit, per grid point
  std::vector<PredictionRow> predictions;                   // final repeat
  std::map<std::string, double> per_language_rmse;          // LOLO, final repeat
  std::optional<RegressorModel> final_model;                // last model fitted in the final repeat
  FeatureSchema schema;
};

namespace exp_detail {

inline std::vector<PerformanceRecord> filter_model(const std::vector<PerformanceRecord>& in,
                                                   const std::optional<std::string>& model) {
  if (!model) return in;
  std::vector<PerformanceRecord> out;
  for (const auto& r : in)
    if (r.estimated_model == *model) out.push_back(r);
  return out;
}

struct RepeatOutcome {
  double rmse = 0.0;
  std::vector<RegressorParams> chosen;
  std::vector<std::vector<double>> cv;
  std::vector<PredictionRow> predictions;
  std::map<std::string, double> per_language;
  std::optional<RegressorModel> model;
};

/// Runs `count` independent jobs on up to `threads` workers. Jobs write to
/// their own slots, so the outcome is independent of scheduling.
template <typename Job>
void run_parallel(std::size_t count, std::size_t threads, Job job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += threads) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace exp_detail

/// Repeats split -> CV -> fit -> test. Repeat r uses seed split.seed + r for
/// the split, the folds and the regressor. LOLO pools the predictions of every
/// held-out language before computing the repeat's RMSE.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto records = exp_detail::filter_model(config.records, config.estimated_model);
  const auto test_records = exp_detail::filter_model(config.test_records, config.estimated_model);
  const bool cross = config.split.kind == SplitKind::cross_dataset;
  if (cross) split_cross_dataset(records, test_records);
  if (records.empty()) throw Error(ErrorCode::too_few_records, "no records match the experiment filter");

  const auto roster = config.proxies ? *config.proxies : proxy_roster(records);
  const auto schema = FeatureSchema::make(config.groups, roster);
  const auto matrix = build_design_matrix(records, schema, config.sources);
  const auto test_matrix = cross ? build_design_matrix(test_records, schema, config.sources) : DesignMatrix{};

  std::vector<exp_detail::RepeatOutcome> outcomes(config.repeats);
  exp_detail::run_parallel(config.repeats, config.threads, [&](std::size_t r) {
    const std::uint64_t seed = config.split.seed + r;
    std::vector<IndexSplit> units;
    switch (config.split.kind) {
      case SplitKind::random: units.push_back(random_split_indices(records.size(), config.split.ratio, seed)); break;
      case SplitKind::lolo: units = lolo_split_indices(records, config.split.held_out_language); break;
      case SplitKind::unseen: units.push_back(unseen_split_indices(records)); break;
      case SplitKind::cross_dataset: units.push_back({"cross_dataset", {}, {}}); break;
    }
    std::vector<RegressorParams> grid;
    for (const auto& p : config.grid) grid.push_back(with_seed(p, seed));

    auto& out = outcomes[r];
    std::vector<double> pooled_pred, pooled_truth;
    for (const auto& unit : units) {
      DesignMatrix train_m, test_m;
      if (cross) {
        train_m = matrix;
        test_m = test_matrix;
      } else {
        train_m = matrix.select(unit.train);
        test_m = matrix.select(unit.test);
      }
      if (train_m.n == 0) throw Error(ErrorCode::degenerate_split, "split '" + unit.label + "' has no training rows");
      // A single grid point needs no search.
      std::size_t chosen = 0;
      if (grid.size() > 1) {
        auto cv = kfold_cv(train_m, config.cv_folds, grid, seed);
        chosen = cv.best_index;
        out.cv.push_back(std::move(cv.mean_rmse));
      } else {
        out.cv.emplace_back();
      }
      out.chosen.push_back(grid[chosen]);
      auto model = fit(train_m, grid[chosen]);
      const auto pred = predict(model, test_m);
      for (std::size_t i = 0; i < test_m.n; ++i) {
        out.predictions.push_back({test_m.row_ids[i], test_m.targets[i], pred[i], unit.label});
        pooled_pred.push_back(pred[i]);
        pooled_truth.push_back(test_m.targets[i]);
      }
      if (config.split.kind == SplitKind::lolo && test_m.n > 0)
        out.per_language[unit.label] = rmse(pred, test_m.targets);
      out.model = std::move(model);
    }
    out.rmse = rmse(pooled_pred, pooled_truth);
  });

  ExperimentResult result;
  result.schema = schema;
  for (auto& o : outcomes) {
    result.per_repeat_rmse.push_back(o.rmse);
    result.chosen_params.push_back(o.chosen);
    result.cv_scores.push_back(o.cv);
  }
  const double n = static_cast<double>(result.per_repeat_rmse.size());
  result.mean = std::accumulate(result.per_repeat_rmse.begin(), result.per_repeat_rmse.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : result.per_repeat_rmse) ss += (v - result.mean) * (v - result.mean);
  result.std = std::sqrt(ss / n);
  auto& last = outcomes.back();
  result.predictions = std::move(last.predictions);
  result.per_language_rmse = std::move(last.per_language);
  result.final_model = std::move(last.model);
  return result;
}

inline std::vector<FeatureGroups> default_ablation_sets() {
  return {
      {.language = false, .dataset = false, .proxy = true},
      {.language = true, .dataset = false, .proxy = true},
      {.language = false, .dataset = true, .proxy = true},
      {.language = true, .dataset = true, .proxy = true},
      {.language = true, .dataset = true, .proxy = false},
  };
}

/// One experiment per feature-group subset, identical in every other respect.
inline std::vector<std::pair<FeatureGroups, ExperimentResult>> run_ablation(const ExperimentConfig& config,
                                                                            std::span<const FeatureGroups> group_sets) {
  std::vector<std::pair<FeatureGroups, ExperimentResult>> out;
  for (const auto& g : group_sets) {
    if (!g.any()) throw Error(ErrorCode::invalid_argument, "ablation subset must enable at least one group");
    auto c = config;
    c.groups = g;
    out.emplace_back(g, run_experiment(c));
  }
  return out;
}

inline nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json chosen = nlohmann::json::array();
  for (const auto& rep : r.chosen_params) {
    nlohmann::json units = nlohmann::json::array();
    for (const auto& p : rep) units.push_back(to_json(p));
    chosen.push_back(units);
  }
  return {{"per_repeat_rmse", r.per_repeat_rmse},
          {"mean_rmse", r.mean},
          {"std_rmse", r.std},
          {"chosen_params", chosen},
          {"cv_mean_rmse", r.cv_scores},
          {"per_language_rmse", r.per_language_rmse},
          {"schema_fingerprint", r.schema.fingerprint()},
          {"columns", r.schema.names()}};
}

}  // namespace proxylm
