#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "proxylm/experiments.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace proxylm;

namespace {

std::multiset<std::string> ids(const std::vector<PerformanceRecord>& r) {
  std::multiset<std::string> out;
  for (const auto& x : r) out.insert(x.record_id);
  return out;
}

void expect_partition(const std::vector<PerformanceRecord>& all, const std::vector<PerformanceRecord>& train,
                      const std::vector<PerformanceRecord>& test) {
  auto joined = ids(train);
  for (const auto& r : test) {
    EXPECT_EQ(ids(train).count(r.record_id), 0u) << r.record_id;
    joined.insert(r.record_id);
  }
  EXPECT_EQ(joined, ids(all));
}

PolyParams exact_linear() {
  PolyParams p;
  p.degree = 1;
  p.alpha = 0.0;
  p.tolerance = 1e-13;
  p.max_iterations = 100000;
  return p;
}

/// score = 2 * proxy + 1 exactly.
synth::World noiseless_world() {
  synth::Options o;
  o.noise = 0.0;
  o.proxy_weight = 2.0;
  o.dataset_weight = 0.0;
  o.languages = 8;
  auto w = synth::make_world(o);
  for (auto& r : w.records) r.score -= 9.0;
  return w;
}

ExperimentConfig config_for(const synth::World& w, FeatureGroups groups, RegressorParams params) {
  ExperimentConfig c;
  c.records = w.records;
  c.sources = w.sources();
  c.grid = {std::move(params)};
  c.groups = groups;
  c.split.seed = 11;
  c.cv_folds = 3;
  return c;
}

GbtParams small_gbt() {
  GbtParams p;
  p.n_estimators = 40;
  p.max_depth = 3;
  p.eta = 0.3;
  p.subsample = 0.8;
  return p;
}

}  // namespace

TEST(Metrics, Rmse) {
  const std::vector<double> a = {1, 2, 3};
  EXPECT_EQ(rmse(a, a), 0.0);
  const std::vector<double> z = {0, 0}, t = {3, 4};
  EXPECT_DOUBLE_EQ(rmse(z, t), std::sqrt(12.5));
  EXPECT_NEAR(rmse(z, t), 3.535534, 1e-6);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> g;
  std::vector<double> p(100), q(100);
  for (auto& v : p) v = g(gen);
  for (auto& v : q) v = g(gen);
  EXPECT_NEAR(rmse(p, q), oracle::rmse(p, q), 1e-12);
  try {
    rmse(a, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::length_mismatch);
  }
  try {
    rmse(std::vector<double>{}, std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty);
  }
}

TEST(Metrics, Iqm) {
  EXPECT_EQ(iqm(std::vector<double>{1, 2, 3, 4}), 2.5);
  EXPECT_EQ(iqm(std::vector<double>{8, 1, 7, 2, 6, 3, 5, 4}), 4.5);
  EXPECT_EQ(iqm(std::vector<double>{0.3, 0.3, 0.3, 0.3, 0.3}), 0.3);
  EXPECT_EQ(iqm(std::vector<double>{5}), 5.0);
  EXPECT_THROW(iqm(std::vector<double>{}), Error);
}

TEST(SplitRandom, ReportedSizes) {
  const std::pair<std::size_t, std::size_t> cases[] = {{1954, 1367}, {224, 156}, {2601, 1820}, {10, 7}};
  for (const auto& [n, train] : cases) {
    const auto records = synth::plain_records(n);
    const auto [tr, te] = split_random(records, 0.7, 5);
    EXPECT_EQ(tr.size(), train) << n;
    EXPECT_EQ(te.size(), n - train) << n;
    expect_partition(records, tr, te);
  }
}

TEST(SplitRandom, FloorRuleOverManySizes) {
  for (std::size_t n = 2; n < 500; ++n) {
    const auto s = random_split_indices(n, 0.7, 1);
    EXPECT_EQ(s.train.size(), (n * 7) / 10) << n;
  }
}

TEST(SplitRandom, SeedBehaviour) {
  const auto records = synth::plain_records(30);
  const auto a = random_split_indices(30, 0.7, 4), b = random_split_indices(30, 0.7, 4);
  EXPECT_EQ(a.train, b.train);
  std::set<std::vector<std::size_t>> distinct;
  for (std::uint64_t s = 0; s < 20; ++s) distinct.insert(random_split_indices(30, 0.7, s).test);
  EXPECT_GE(distinct.size(), 19u);
  try {
    split_random(synth::plain_records(1), 0.7, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_records);
  }
}

TEST(SplitUnseen, ReportedSizesAndSwap) {
  auto records = synth::plain_records(1954, 101);
  const auto [tr, te] = split_unseen(records);
  EXPECT_EQ(tr.size(), 1853u);
  EXPECT_EQ(te.size(), 101u);
  expect_partition(records, tr, te);

  for (auto& r : records) r.seen_by_estimated_model = !r.seen_by_estimated_model;
  const auto [tr2, te2] = split_unseen(records);
  EXPECT_EQ(ids(tr2), ids(te));
  EXPECT_EQ(ids(te2), ids(tr));

  try {
    split_unseen(synth::plain_records(10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_split);
  }
}

TEST(SplitCrossDataset, SizesAndErrors) {
  const auto a = synth::plain_records(1954), b = synth::plain_records(224);
  const auto [tr, te] = split_cross_dataset(a, b);
  EXPECT_EQ(tr.size(), 1954u);
  EXPECT_EQ(te.size(), 224u);

  auto c = b;
  c[0].proxy_scores["other"] = 1.0;
  try {
    split_cross_dataset(a, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::schema_mismatch);
  }
  EXPECT_THROW(split_cross_dataset(a, {}), Error);
}

TEST(SplitLolo, ThreeLanguagesAndMembership) {
  const auto w = synth::make_world({.languages = 3});
  const auto splits = split_lolo(w.records);
  ASSERT_EQ(splits.size(), 3u);
  for (const auto& s : splits) {
    EXPECT_NE(s.held_out_language, "eng");
    for (const auto& r : s.test) EXPECT_TRUE(r.src_lang == s.held_out_language || r.tgt_lang == s.held_out_language);
    for (const auto& r : s.train) EXPECT_FALSE(r.src_lang == s.held_out_language || r.tgt_lang == s.held_out_language);
    expect_partition(w.records, s.train, s.test);
  }
}

TEST(SplitLolo, IntentStyleRecords) {
  std::vector<PerformanceRecord> records;
  for (int l = 0; l < 51; ++l)
    for (int k = 0; k < 2; ++k) {
      PerformanceRecord r;
      r.record_id = "i" + std::to_string(l) + "_" + std::to_string(k);
      r.src_lang = r.tgt_lang = "lang" + std::to_string(l);
      records.push_back(r);
    }
  const auto splits = split_lolo(records);
  EXPECT_EQ(splits.size(), 51u);
  for (const auto& s : splits) EXPECT_EQ(s.test.size(), 2u);
}

TEST(SplitLolo, TooFewLanguages) {
  const auto w = synth::make_world({.languages = 1});
  try {
    split_lolo(w.records);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_languages);
  }
}

TEST(KFold, FoldSizesAndPartition) {
  const auto ten = kfold_indices(100, 10, 3);
  for (const auto& f : ten) EXPECT_EQ(f.size(), 10u);
  const auto odd = kfold_indices(23, 10, 3);
  std::vector<std::size_t> sizes;
  for (const auto& f : odd) sizes.push_back(f.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 2, 2, 2, 2, 2, 2, 2}));
  std::vector<std::size_t> all;
  for (const auto& f : odd) all.insert(all.end(), f.begin(), f.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 23; ++i) EXPECT_EQ(all[i], i);
  try {
    kfold_indices(5, 10, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_records);
  }
}

TEST(KFold, RiggedGridPicksExactModel) {
  const auto w = noiseless_world();
  const auto schema = FeatureSchema::make({.language = false, .dataset = false, .proxy = true}, proxy_roster(w.records));
  const auto m = build_design_matrix(w.records, schema, w.sources());
  auto shrunk = exact_linear();
  shrunk.alpha = 50.0;
  const std::vector<RegressorParams> grid = {small_gbt(), shrunk, exact_linear()};
  const auto cv = kfold_cv(m, 10, grid, 1);
  EXPECT_EQ(cv.best_index, 2u);
  EXPECT_LT(cv.mean_rmse[2], 1e-6);
  EXPECT_TRUE(std::holds_alternative<PolyParams>(cv.best_params));
}

TEST(KFold, TiesGoToEarlierGridPoint) {
  const auto w = noiseless_world();
  const auto schema = FeatureSchema::make({.language = false, .dataset = false, .proxy = true}, proxy_roster(w.records));
  const auto m = build_design_matrix(w.records, schema, w.sources());
  const std::vector<RegressorParams> grid = {exact_linear(), exact_linear()};
  EXPECT_EQ(kfold_cv(m, 5, grid, 1).best_index, 0u);
}

TEST(RunExperiment, NoiselessLinearIsRecovered) {
  const auto w = noiseless_world();
  const auto r = run_experiment(config_for(w, {.language = false, .dataset = false, .proxy = true}, exact_linear()));
  EXPECT_EQ(r.per_repeat_rmse.size(), 5u);
  EXPECT_LT(r.mean, 1e-6);
}

TEST(RunExperiment, DefaultsToFiveRepeatsAndConsistentSummary) {
  const auto w = synth::make_world({});
  auto c = config_for(w, {}, small_gbt());
  const auto r = run_experiment(c);
  ASSERT_EQ(r.per_repeat_rmse.size(), 5u);
  double mean = 0;
  for (double v : r.per_repeat_rmse) mean += v;
  mean /= 5;
  EXPECT_NEAR(r.mean, mean, 1e-12);
  double ss = 0;
  for (double v : r.per_repeat_rmse) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(r.std, std::sqrt(ss / 5), 1e-12);
  EXPECT_EQ(r.chosen_params.size(), 5u);
}

TEST(RunExperiment, DeterministicAndThreadInvariant) {
  const auto w = synth::make_world({});
  for (auto kind : {SplitKind::random, SplitKind::lolo}) {
    auto c = config_for(w, {}, small_gbt());
    c.split.kind = kind;
    c.repeats = 3;
    const auto a = run_experiment(c);
    const auto b = run_experiment(c);
    c.threads = 4;
    const auto t = run_experiment(c);
    EXPECT_EQ(a.per_repeat_rmse, b.per_repeat_rmse);
    EXPECT_EQ(a.per_repeat_rmse, t.per_repeat_rmse);
    EXPECT_EQ(to_json(a).dump(), to_json(t).dump());
  }
}

TEST(RunExperiment, LoloPoolsAndKeepsPerLanguage) {
  const auto w = synth::make_world({.languages = 4});
  auto c = config_for(w, {}, exact_linear());
  c.split.kind = SplitKind::lolo;
  c.repeats = 1;
  const auto r = run_experiment(c);
  EXPECT_EQ(r.per_language_rmse.size(), 4u);
  std::vector<double> pred, truth;
  for (const auto& p : r.predictions) {
    pred.push_back(p.prediction);
    truth.push_back(p.truth);
  }
  EXPECT_EQ(r.predictions.size(), w.records.size());
  EXPECT_NEAR(r.per_repeat_rmse[0], oracle::rmse(pred, truth), 1e-12);
}

TEST(RunExperiment, TestMembershipIndependentOfFeatures) {
  const auto w = synth::make_world({});
  auto small = config_for(w, {.language = false, .dataset = false, .proxy = true}, small_gbt());
  auto large = config_for(w, {}, small_gbt());
  small.repeats = large.repeats = 2;
  auto test_ids = [](const ExperimentResult& r) {
    std::multiset<std::string> s;
    for (const auto& p : r.predictions) s.insert(p.record_id);
    return s;
  };
  EXPECT_EQ(test_ids(run_experiment(small)), test_ids(run_experiment(large)));
}

TEST(RunExperiment, CrossDatasetUsesSecondCollection) {
  const auto w = synth::make_world({});
  auto other = synth::make_world({.seed = 9});
  for (auto& r : other.records) r.record_id = "x" + r.record_id;
  auto c = config_for(w, {}, small_gbt());
  c.split.kind = SplitKind::cross_dataset;
  c.test_records = other.records;
  c.repeats = 1;
  EXPECT_EQ(run_experiment(c).predictions.size(), other.records.size());
}

TEST(RunAblation, DefaultSetsAndBaselineIdentity) {
  synth::Options o;
  o.dataset_weight = 0.0;
  o.seed = 4;
  const auto w = synth::make_world(o);
  auto c = config_for(w, {}, small_gbt());
  c.repeats = 3;
  const auto sets = default_ablation_sets();
  ASSERT_EQ(sets.size(), 5u);
  const auto results = run_ablation(c, sets);
  ASSERT_EQ(results.size(), 5u);

  auto base = c;
  base.groups = {.language = true, .dataset = true, .proxy = false};
  const auto baseline = run_experiment(base);
  const auto& last = results.back();
  EXPECT_FALSE(last.first.proxy);
  EXPECT_EQ(last.second.per_repeat_rmse, baseline.per_repeat_rmse);

  for (const auto& [groups, r] : results) {
    if (groups.proxy) {
      EXPECT_LT(r.mean, baseline.mean) << groups.label();
    }
  }
}

TEST(ExperimentConfig, Validation) {
  ExperimentConfig c;
  c.grid = {small_gbt()};
  c.repeats = 0;
  EXPECT_THROW(c.validate(), Error);
  c.repeats = 1;
  c.cv_folds = 1;
  EXPECT_THROW(c.validate(), Error);
  c.cv_folds = 2;
  c.groups = {false, false, false};
  EXPECT_THROW(c.validate(), Error);
  SplitSpec s;
  s.ratio = 1.0;
  EXPECT_THROW(s.validate(), Error);
}
