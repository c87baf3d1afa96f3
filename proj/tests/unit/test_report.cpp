#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "proxylm/report.hpp"
#include "support/oracles.hpp"

using namespace proxylm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t data_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;  // header
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("proxylm_report_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

/// Hand-built input: 8 records over 3 Joshi classes and 2 families.
ReportInput fixture() {
  ReportInput in;
  ExperimentResult r;
  r.per_repeat_rmse = {1.25, 1.5, 1.75};
  r.mean = 1.5;
  r.std = 0.2041241452;
  const double truth[] = {10, 12, 15, 18, 20, 25, 27, 31};
  const double pred[] = {11, 11.5, 16, 17, 21.5, 24, 28, 29.5};
  for (int i = 0; i < 8; ++i) {
    PerformanceRecord rec;
    rec.record_id = "r" + std::to_string(7 - i);  // reverse order; scatter sorts by id
    rec.src_lang = "eng";
    rec.tgt_lang = "l" + std::to_string(i % 4);
    rec.joshi_class = i % 3;
    if (i != 5) rec.language_family = i % 2 ? "fam_a" : "fam_b";
    in.records.push_back(rec);
    r.predictions.push_back({rec.record_id, truth[i], pred[i], ""});
  }
  ExperimentResult second = r;
  second.mean = 2.0;
  second.std = 0.0;
  in.results = {{"proxy+language+dataset", r}, {"language+dataset", second}};
  in.importance = std::map<std::string, double>{{"proxy:p0", 0.7}, {"lang:geographic", 0.1}, {"word_overlap", 0.2}};
  return in;
}

}  // namespace

TEST(Lowess, CollinearIsExact) {
  std::vector<double> x, y;
  for (int i = 0; i < 15; ++i) {
    x.push_back(i * 0.7 - 3);
    y.push_back(2.5 * x.back() - 1);
  }
  for (double frac : {0.1, 0.3, 0.5, 1.0}) {
    const auto fit = lowess(x, y, frac);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fit[i], y[i], 1e-9) << frac;
  }
}

TEST(Lowess, ConstantY) {
  const std::vector<double> x = {3, 1, 2, 5, 4}, y(5, 4.25);
  for (double v : lowess(x, y, 0.6)) EXPECT_NEAR(v, 4.25, 1e-12);
}

TEST(Lowess, NoisyQuadraticMatchesOracle) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(-3, 3);
  std::normal_distribution<double> g(0, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
      x.push_back(u(gen));
      y.push_back(x.back() * x.back() + g(gen));
    }
    for (double frac : {0.2, 0.5, 0.8}) {
      const auto fit = lowess(x, y, frac);
      const auto want = oracle::lowess(x, y, frac);
      for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fit[i], want[i], 1e-9);
    }
  }
}

TEST(Lowess, Errors) {
  const std::vector<double> one = {1}, two = {1, 2}, same = {2, 2};
  try {
    lowess(same, two, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_points);
  }
  EXPECT_THROW(lowess(one, two, 0.5), Error);
  EXPECT_THROW(lowess(two, two, 0.0), Error);
}

TEST(RSquared, Cases) {
  const std::vector<double> t = {1, 2, 3, 4};
  EXPECT_EQ(r_squared(t, t), 1.0);
  EXPECT_EQ(r_squared(std::vector<double>(4, 2.5), t), 0.0);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(30), q(30);
    for (auto& v : p) v = g(gen);
    for (auto& v : q) v = g(gen);
    const double r2 = r_squared(p, q);
    EXPECT_NEAR(r2, oracle::r_squared(p, q), 1e-12);
    EXPECT_LT(r2, 1.0);
  }
  try {
    r_squared(t, std::vector<double>(4, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_variance);
  }
}

TEST(Report, RowCounts) {
  const auto dir = scratch("rows");
  auto in = fixture();
  const auto files = emit_report(dir, in);
  EXPECT_EQ(files, (std::vector<std::string>{"summary.md", "groups_joshi.csv", "groups_family.csv", "scatter.csv",
                                             "importance.csv"}));
  EXPECT_EQ(data_rows(dir / "summary.md"), 3u);  // header separator counts as a row
  EXPECT_EQ(data_rows(dir / "groups_joshi.csv"), 3u);
  EXPECT_EQ(data_rows(dir / "groups_family.csv"), 3u);  // fam_a, fam_b, unknown
  EXPECT_EQ(data_rows(dir / "scatter.csv"), 8u);
  EXPECT_EQ(data_rows(dir / "importance.csv"), 3u);

  in.results.resize(1);
  in.format = ReportFormat::csv;
  in.importance.reset();
  const auto dir2 = scratch("rows_csv");
  const auto files2 = emit_report(dir2, in);
  EXPECT_EQ(data_rows(dir2 / "summary.csv"), 1u);
  EXPECT_EQ(std::count(files2.begin(), files2.end(), "importance.csv"), 0);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(Report, ImportanceSortedDescending) {
  const auto dir = scratch("imp");
  emit_report(dir, fixture());
  EXPECT_EQ(slurp(dir / "importance.csv"),
            "feature,importance\nproxy:p0,0.7000\nword_overlap,0.2000\nlang:geographic,0.1000\n");
  fs::remove_all(dir);
}

TEST(Report, ScatterHeaderAndOrder) {
  const auto dir = scratch("scatter");
  emit_report(dir, fixture());
  std::istringstream in(slurp(dir / "scatter.csv"));
  std::string header, columns, first;
  std::getline(in, header);
  std::getline(in, columns);
  std::getline(in, first);
  EXPECT_EQ(header.rfind("# r_squared=", 0), 0u);
  EXPECT_NE(header.find("lowess_frac=0.5000"), std::string::npos);
  EXPECT_EQ(columns, "record_id,true,pred,lowess,language,joshi_class,language_family");
  EXPECT_EQ(first.rfind("r0,31.0000,29.5000,", 0), 0u);
  fs::remove_all(dir);
}

TEST(Report, EmptyResultsRejected) { EXPECT_THROW(emit_report(scratch("none"), ReportInput{}), Error); }

// Frozen output; regenerate with PROXYLM_UPDATE_GOLDEN=1 after an intended format change.
TEST(Report, GoldenFiles) {
  const fs::path golden = fs::path(PROXYLM_SOURCE_DIR) / "tests" / "golden" / "report";
  const auto dir = scratch("golden");
  const auto files = emit_report(dir, fixture());
  if (std::getenv("PROXYLM_UPDATE_GOLDEN")) {
    fs::create_directories(golden);
    for (const auto& f : files) fs::copy_file(dir / f, golden / f, fs::copy_options::overwrite_existing);
  }
  for (const auto& f : files) EXPECT_EQ(slurp(dir / f), slurp(golden / f)) << f;
  const auto again = scratch("golden2");
  emit_report(again, fixture());
  for (const auto& f : files) EXPECT_EQ(slurp(dir / f), slurp(again / f)) << f;
  fs::remove_all(dir);
  fs::remove_all(again);
}
