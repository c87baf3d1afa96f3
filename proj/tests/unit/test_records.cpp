#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "proxylm/records.hpp"
#include "support/synthetic.hpp"

using namespace proxylm;

namespace {

std::filesystem::path write_tmp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

const std::string kHeader =
    "record_id,task,estimated_model,train_dataset,test_dataset,src_lang,tgt_lang,metric_name,score,"
    "seen_by_estimated_model,corpus_group,joshi_class,proxy:smallm,proxy:transformer\n";

PerformanceRecord run(std::string id, double score, std::optional<double> p) {
  PerformanceRecord r;
  r.record_id = std::move(id);
  r.estimated_model = "m";
  r.src_lang = "eng";
  r.tgt_lang = "ind";
  r.metric_name = "spbleu";
  r.score = score;
  r.proxy_scores["p"] = p;
  return r;
}

}  // namespace

TEST(LoadRecords, EmptyFileGivesEmptyList) {
  EXPECT_TRUE(load_records(write_tmp("proxylm_empty.csv", "").string()).empty());
  EXPECT_TRUE(load_records(write_tmp("proxylm_header_only.csv", kHeader).string()).empty());
  EXPECT_TRUE(load_records(write_tmp("proxylm_empty.jsonl", "").string()).empty());
}

TEST(LoadRecords, NegativeSpbleuIsRangeError) {
  const auto p = write_tmp("proxylm_neg.csv", kHeader + "r1,mt,m,a,b,eng,ind,spBLEU,-1,true,english_centric,1,2,\n");
  try {
    load_records(p.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::range_error);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadRecords, DuplicateIdRejected) {
  const auto p = write_tmp("proxylm_dup.csv", kHeader + "r1,mt,m,a,b,eng,ind,spbleu,1,true,other,,2,\n"
                                                        "r1,mt,m,a,b,eng,jav,spbleu,1,true,other,,2,\n");
  try {
    load_records(p.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::duplicate_id);
  }
}

TEST(LoadRecords, MalformedRowIsParseError) {
  for (const char* row : {"r1,mt,m,a,b,eng,ind,spbleu,abc,true,other,,2,\n", "r1,xx,m,a,b,eng,ind,spbleu,1,true,other,,2,\n",
                          "r1,mt,m,a,b,eng,ind,spbleu,1,maybe,other,,2,\n", "r1,mt,m,a,b,eng,ind,spbleu,1,true,other\n"}) {
    try {
      load_records(write_tmp("proxylm_bad.csv", kHeader + row).string());
      ADD_FAILURE() << row;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::parse_error) << row;
    }
  }
}

TEST(LoadRecords, TenRowFixtureRoundTrips) {
  std::string body = kHeader;
  for (int i = 0; i < 10; ++i) {
    body += "r" + std::to_string(i) + ",mt,nllb,d" + std::to_string(i % 3) + ",flores,eng,l" + std::to_string(i) +
            ",spbleu," + std::to_string(10.25 + i) + "," + (i % 4 ? "true" : "false") + ",english_centric," +
            (i % 2 ? std::to_string(i % 6) : "") + "," + std::to_string(3.5 * i) + "," + (i % 3 ? "1.125" : "") + "\n";
  }
  const auto recs = load_records(write_tmp("proxylm_ten.csv", body).string());
  ASSERT_EQ(recs.size(), 10u);
  EXPECT_EQ(recs[3].record_id, "r3");
  EXPECT_EQ(recs[3].train_dataset, "d0");
  EXPECT_EQ(recs[3].tgt_lang, "l3");
  EXPECT_EQ(recs[3].score, 13.25);
  EXPECT_EQ(recs[3].joshi_class, 3);
  EXPECT_FALSE(recs[4].joshi_class.has_value());
  EXPECT_FALSE(recs[4].seen_by_estimated_model);
  EXPECT_EQ(recs[3].proxy_scores.at("smallm"), 10.5);
  EXPECT_FALSE(recs[3].proxy_scores.at("transformer").has_value());
  EXPECT_EQ(recs[4].proxy_scores.at("transformer"), 1.125);

  const auto again = load_records(write_tmp("proxylm_ten_rt.csv", format_records_csv(recs)).string());
  EXPECT_EQ(again, recs);
}

TEST(LoadRecords, JsonLinesFillsRoster) {
  const auto p = write_tmp("proxylm_recs.jsonl",
                           R"({"record_id":"a","task":"intent","estimated_model":"aya","train_dataset":"massive","test_dataset":"massive","src_lang":"deu","tgt_lang":"deu","metric_name":"accuracy","score":80.5,"proxy_scores":{"smollm":70.0}})"
                           "\n"
                           R"({"record_id":"b","task":"intent","estimated_model":"aya","train_dataset":"massive","test_dataset":"massive","src_lang":"fra","tgt_lang":"fra","metric_name":"accuracy","score":81,"proxy_scores":{"bloomz":null,"smollm":71}})"
                           "\n");
  const auto recs = load_records(p.string());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].task, Task::intent);
  EXPECT_EQ(recs[0].proxy_scores.size(), 2u);
  EXPECT_FALSE(recs[0].proxy_scores.at("bloomz").has_value());
  EXPECT_EQ(recs[1].proxy_scores.at("smollm"), 71.0);
}

TEST(AverageProxyScores, MeanOfRuns) {
  std::vector<PerformanceRecord> runs = {run("a", 1, 10), run("b", 2, 12), run("c", 3, 14)};
  const auto avg = average_proxy_scores(runs);
  EXPECT_EQ(avg.proxy_scores.at("p"), 12.0);
  EXPECT_EQ(avg.score, 2.0);
}

TEST(AverageProxyScores, SingleRunIsIdentity) {
  std::vector<PerformanceRecord> runs = {run("a", 1.5, 7.25)};
  EXPECT_EQ(average_proxy_scores(runs), runs[0]);
}

TEST(AverageProxyScores, MeanOverPresentRuns) {
  std::vector<PerformanceRecord> runs = {run("a", 1, 4), run("b", 1, std::nullopt), run("c", 1, 6)};
  EXPECT_EQ(average_proxy_scores(runs).proxy_scores.at("p"), 5.0);
  std::vector<PerformanceRecord> none = {run("a", 1, std::nullopt), run("b", 1, std::nullopt)};
  EXPECT_FALSE(average_proxy_scores(none).proxy_scores.at("p").has_value());
}

TEST(AverageProxyScores, KeyMismatch) {
  auto b = run("b", 1, 1);
  b.tgt_lang = "jav";
  std::vector<PerformanceRecord> runs = {run("a", 1, 1), b};
  try {
    average_proxy_scores(runs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::key_mismatch);
  }
}

TEST(AverageRuns, GroupsByKeyInFirstOccurrenceOrder) {
  auto other = run("x", 9, 9);
  other.tgt_lang = "jav";
  std::vector<PerformanceRecord> recs = {run("a", 1, 1), other, run("b", 3, 3)};
  const auto out = average_runs(recs);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].record_id, "a");
  EXPECT_EQ(out[0].score, 2.0);
  EXPECT_EQ(out[1].record_id, "x");
}

TEST(Schema, ColumnOrderAndGroups) {
  const std::vector<std::string> proxies = {"a", "b", "c", "d"};
  const auto s = FeatureSchema::make({}, proxies);
  ASSERT_EQ(s.size(), 20u);
  EXPECT_EQ(s.columns()[0].name, "lang:geographic");
  EXPECT_EQ(s.columns()[5].name, "lang:featural");
  EXPECT_EQ(s.columns()[6].name, "train_size");
  EXPECT_EQ(s.columns()[15].name, "embedding_cosine");
  EXPECT_EQ(s.columns()[16].name, "proxy:a");
  EXPECT_EQ(s.columns()[16].group, FeatureGroup::proxy);
  EXPECT_EQ(s.fingerprint(), FeatureSchema::make({}, proxies).fingerprint());
  EXPECT_NE(s.fingerprint(), FeatureSchema::make({.language = false}, proxies).fingerprint());
}

TEST(Schema, DisablingGroupRemovesExactlyItsColumns) {
  const std::vector<std::string> proxies = {"a", "b"};
  const auto full = FeatureSchema::make({}, proxies);
  for (auto g : {FeatureGroup::language, FeatureGroup::dataset, FeatureGroup::proxy}) {
    FeatureGroups groups;
    if (g == FeatureGroup::language) groups.language = false;
    if (g == FeatureGroup::dataset) groups.dataset = false;
    if (g == FeatureGroup::proxy) groups.proxy = false;
    std::vector<FeatureColumn> expect;
    for (const auto& c : full.columns())
      if (c.group != g) expect.push_back(c);
    EXPECT_EQ(FeatureSchema::make(groups, proxies).columns(), expect);
  }
}

TEST(DesignMatrix, ZeroRecords) {
  const auto w = synth::make_world({});
  const auto m = build_design_matrix({}, FeatureSchema::make({}, proxy_roster(w.records)), w.sources());
  EXPECT_EQ(m.n, 0u);
  EXPECT_EQ(m.d(), 18u);
  EXPECT_TRUE(m.values.empty());
}

TEST(DesignMatrix, DimensionsAndCellsMatchSources) {
  auto w = synth::make_world({.proxies = 4});
  std::vector<PerformanceRecord> five(w.records.begin(), w.records.begin() + 5);
  five[2].proxy_scores["p3"] = std::nullopt;
  const auto schema = FeatureSchema::make({}, proxy_roster(five));
  const auto m = build_design_matrix(five, schema, w.sources());
  ASSERT_EQ(m.n, 5u);
  ASSERT_EQ(m.d(), 20u);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& r = five[i];
    EXPECT_EQ(m.row_ids[i], r.record_id);
    EXPECT_EQ(m.targets[i], r.score);
    for (std::size_t k = 0; k < 6; ++k)
      EXPECT_EQ(m.at(i, k), *w.table.find(r.src_lang, r.tgt_lang, kDistanceKinds[k]));
    const auto& f = w.features.at({r.train_dataset, r.test_dataset});
    EXPECT_EQ(m.at(i, 6), f.train_size);
    EXPECT_EQ(m.at(i, 9), f.word_overlap);
    EXPECT_EQ(m.at(i, 15), *f.embedding_cosine);
    EXPECT_EQ(m.at(i, 16), *r.proxy_scores.at("p0"));
  }
  EXPECT_TRUE(m.is_missing(2, 19));
  EXPECT_TRUE(std::isnan(m.at(2, 19)));
  EXPECT_FALSE(m.is_missing(1, 19));
}

TEST(DesignMatrix, MissingFeatureNamesRecordAndColumn) {
  auto w = synth::make_world({});
  auto recs = std::vector<PerformanceRecord>(w.records.begin(), w.records.begin() + 3);
  recs[1].train_dataset = "nowhere";
  try {
    build_design_matrix(recs, FeatureSchema::make({}, proxy_roster(recs)), w.sources());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_feature);
    EXPECT_NE(e.detail().find(recs[1].record_id), std::string::npos);
    EXPECT_NE(e.detail().find("train_size"), std::string::npos);
  }
  recs[1] = w.records[1];
  recs[1].tgt_lang = "zzz";
  EXPECT_THROW(build_design_matrix(recs, FeatureSchema::make({}, proxy_roster(recs)), w.sources()), Error);
}

TEST(DesignMatrix, DeterministicAndPermutationEquivariant) {
  const auto w = synth::make_world({.seed = 5});
  const auto schema = FeatureSchema::make({}, proxy_roster(w.records));
  const auto a = build_design_matrix(w.records, schema, w.sources());
  const auto b = build_design_matrix(w.records, schema, w.sources());
  EXPECT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(0, std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)));

  std::vector<std::size_t> perm(w.records.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(2));
  std::vector<PerformanceRecord> shuffled;
  for (auto p : perm) shuffled.push_back(w.records[p]);
  const auto c = build_design_matrix(shuffled, schema, w.sources());
  const auto expected = a.select(perm);
  EXPECT_EQ(c.row_ids, expected.row_ids);
  EXPECT_EQ(0, std::memcmp(c.values.data(), expected.values.data(), c.values.size() * sizeof(double)));
}
