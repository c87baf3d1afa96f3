#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "proxylm/lang_features.hpp"

using namespace proxylm;

namespace {

std::filesystem::path write_tmp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

ErrorCode load_error(const std::string& body) {
  const auto p = write_tmp("proxylm_lang_err.csv", "lang_a,lang_b,kind,distance\n" + body);
  try {
    load_distance_table(p.string());
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for " << body;
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST(DistanceTable, RejectsNonzeroSelfDistance) {
  EXPECT_EQ(load_error("eng,eng,genetic,0.3\n"), ErrorCode::self_distance_nonzero);
}

TEST(DistanceTable, RejectsOutOfRange) {
  EXPECT_EQ(load_error("eng,fra,genetic,1.2\n"), ErrorCode::range_error);
  EXPECT_EQ(load_error("eng,fra,genetic,-0.1\n"), ErrorCode::range_error);
}

TEST(DistanceTable, RejectsConflictingDuplicate) {
  EXPECT_EQ(load_error("eng,fra,genetic,0.2\nfra,eng,genetic,0.3\n"), ErrorCode::asymmetry_error);
}

TEST(DistanceTable, RejectsMalformedRow) {
  EXPECT_EQ(load_error("eng,fra,genetic\n"), ErrorCode::parse_error);
  EXPECT_EQ(load_error("eng,fra,lexical,0.1\n"), ErrorCode::parse_error);
  EXPECT_EQ(load_error("eng,fra,genetic,abc\n"), ErrorCode::parse_error);
}

TEST(DistanceTable, ErrorsCarryLineNumbers) {
  const auto p = write_tmp("proxylm_lang_line.csv", "lang_a,lang_b,kind,distance\neng,fra,genetic,0.1\neng,deu,genetic,7\n");
  try {
    load_distance_table(p.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.file(), p.string());
  }
}

class Fixture3 : public ::testing::Test {
 protected:
  void SetUp() override {
    // 3 languages x 6 kinds, one orientation per unordered pair
    std::string body = "lang_a,lang_b,kind,distance\n";
    const char* pairs[][2] = {{"aaa", "bbb"}, {"aaa", "ccc"}, {"bbb", "ccc"}};
    double v = 0.05;
    for (auto& pr : pairs)
      for (auto k : kDistanceKindNames) {
        body += std::string(pr[0]) + "," + pr[1] + "," + std::string(k) + "," + csv::format_exact(v) + "\n";
        expected[{pr[0], pr[1]}].push_back(v);
        v += 0.05;
      }
    path = write_tmp("proxylm_lang_fixture.csv", body);
    table = load_distance_table(path.string());
  }
  std::filesystem::path path;
  LanguageDistanceTable table;
  std::map<std::pair<std::string, std::string>, std::vector<double>> expected;
};

TEST_F(Fixture3, AllLookupsResolvable) {
  std::size_t resolvable = 0;
  for (const char* a : {"aaa", "bbb", "ccc"})
    for (const char* b : {"aaa", "bbb", "ccc"})
      for (auto k : kDistanceKinds) resolvable += table.find(a, b, k).has_value();
  EXPECT_EQ(resolvable, 6u * 3u * 3u);
}

TEST_F(Fixture3, FeaturesInKindOrderAndSymmetric) {
  const auto f = language_features(table, "aaa", "bbb");
  const auto& want = expected[{"aaa", "bbb"}];
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(f.values[i], want[i]);
  for (const char* a : {"aaa", "bbb", "ccc"})
    for (const char* b : {"aaa", "bbb", "ccc"}) EXPECT_EQ(language_features(table, a, b), language_features(table, b, a));
  EXPECT_EQ(language_features(table, "ccc", "ccc").values, (std::array<double, 6>{}));
}

TEST_F(Fixture3, SerializationRoundTripIsIdempotent) {
  const auto text = format_distance_table(table);
  const auto p2 = write_tmp("proxylm_lang_rt.csv", text);
  const auto again = load_distance_table(p2.string());
  EXPECT_EQ(again.entries(), table.entries());
  EXPECT_EQ(format_distance_table(again), text);
}

TEST_F(Fixture3, MissingPairListsAbsentKinds) {
  LanguageDistanceTable partial;
  partial.insert("aaa", "zzz", DistanceKind::genetic, 0.5);
  try {
    language_features(partial, "zzz", "aaa");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_pair);
    EXPECT_NE(e.detail().find("geographic"), std::string::npos);
    EXPECT_EQ(e.detail().find("genetic,"), std::string::npos);
  }
}
