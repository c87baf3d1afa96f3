#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "proxylm/corpus_features.hpp"
#include "proxylm/csv.hpp"
#include "proxylm/error.hpp"
#include "proxylm/lang_features.hpp"

namespace proxylm {

enum class Task { mt, intent, slot };
enum class CorpusGroup { english_centric, many_to_many, other };

constexpr std::string_view to_string(Task t) {
  switch (t) {
    case Task::mt: return "mt";
    case Task::intent: return "intent";
    case Task::slot: return "slot";
  }
  return "";
}

constexpr std::string_view to_string(CorpusGroup g) {
  switch (g) {
    case CorpusGroup::english_centric: return "english_centric";
    case CorpusGroup::many_to_many: return "many_to_many";
    case CorpusGroup::other: return "other";
  }
  return "";
}

inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "mt") return Task::mt;
  if (s == "intent") return Task::intent;
  if (s == "slot") return Task::slot;
  return std::nullopt;
}

inline std::optional<CorpusGroup> parse_corpus_group(std::string_view s) {
  if (s == "english_centric") return CorpusGroup::english_centric;
  if (s == "many_to_many") return CorpusGroup::many_to_many;
  if (s == "other") return CorpusGroup::other;
  return std::nullopt;
}

/// Inclusive score range for bounded metrics. Percent scale throughout:
/// spBLEU, BLEU, chrF, accuracy, F1 and COMET scores are expected in [0, 100].
inline std::optional<std::pair<double, double>> metric_range(std::string_view metric) {
  std::string m(metric);
  std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::set<std::string> percent = {"spbleu", "bleu",     "chrf",   "accuracy", "acc",
                                                "f1",     "micro_f1", "microf1", "comet",   "comet22",
                                                "comet-22"};
  if (percent.contains(m)) return std::make_pair(0.0, 100.0);
  return std::nullopt;
}

/// One observed outcome of an estimated model, plus the proxy models' scores
/// on the same train/test data and language pair.
struct PerformanceRecord {
  std::string record_id;
  Task task = Task::mt;
  std::string estimated_model;
  std::string train_dataset;
  std::string test_dataset;
  std::string src_lang;
  std::string tgt_lang;
  std::string metric_name;
  double score = 0.0;
  std::map<std::string, std::optional<double>> proxy_scores;
  bool seen_by_estimated_model = true;
  CorpusGroup corpus_group = CorpusGroup::other;
  std::optional<int> joshi_class;
  std::string language_family;  // optional grouping label for reports

  bool operator==(const PerformanceRecord&) const = default;
};

/// Label used for per-language grouping: the non-English side of a pair, or
/// the source language when neither (or both) side is English.
inline const std::string& record_language(const PerformanceRecord& r) {
  if (r.src_lang == "eng" && r.tgt_lang != "eng") return r.tgt_lang;
  return r.src_lang;
}

namespace detail {

inline void validate_record(const PerformanceRecord& r) {
  if (r.record_id.empty()) throw Error(ErrorCode::parse_error, "empty record_id");
  if (!std::isfinite(r.score)) throw Error(ErrorCode::range_error, "non-finite score");
  if (auto range = metric_range(r.metric_name)) {
    auto check = [&](double v, const std::string& what) {
      if (v < range->first || v > range->second)
        throw Error(ErrorCode::range_error, what + " " + csv::format_exact(v) + " outside [" +
                                                csv::format_fixed(range->first, 0) + ", " +
                                                csv::format_fixed(range->second, 0) + "] for metric " +
                                                r.metric_name);
    };
    check(r.score, "score");
    for (const auto& [id, v] : r.proxy_scores)
      if (v) check(*v, "proxy score '" + id + "'");
  }
  for (const auto& [id, v] : r.proxy_scores)
    if (v && !std::isfinite(*v)) throw Error(ErrorCode::range_error, "non-finite proxy score '" + id + "'");
  if (r.joshi_class && (*r.joshi_class < 0 || *r.joshi_class > 5))
    throw Error(ErrorCode::range_error, "joshi_class must be in 0..5");
}

inline std::optional<bool> parse_bool(std::string_view s) {
  s = csv::trim(s);
  if (s == "true" || s == "1" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "0" || s == "False" || s == "FALSE") return false;
  return std::nullopt;
}

inline std::vector<PerformanceRecord> load_records_csv(const std::string& path) {
  const auto table = csv::read_file(path);
  std::vector<PerformanceRecord> out;
  if (table.header.empty()) return out;
  static constexpr std::array<std::string_view, 12> required = {
      "record_id", "task",  "estimated_model",        "train_dataset", "test_dataset", "src_lang",
      "tgt_lang",  "metric_name", "score", "seen_by_estimated_model", "corpus_group", "joshi_class"};
  std::array<std::size_t, 12> col{};
  for (std::size_t i = 0; i < required.size(); ++i) {
    auto c = table.column(required[i]);
    if (!c) throw Error(ErrorCode::parse_error, "missing column '" + std::string(required[i]) + "'", path, 1);
    col[i] = *c;
  }
  const auto family_col = table.column("language_family");
  std::vector<std::pair<std::string, std::size_t>> proxy_cols;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    const auto& h = table.header[i];
    if (h.rfind("proxy:", 0) == 0) {
      if (h.size() == 6) throw Error(ErrorCode::parse_error, "empty proxy id in header", path, 1);
      proxy_cols.emplace_back(h.substr(6), i);
    }
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    auto cell = [&](std::size_t k) { return std::string(csv::trim(row[col[k]])); };
    auto fail = [&](const std::string& msg) { return Error(ErrorCode::parse_error, msg, path, line); };
    PerformanceRecord rec;
    rec.record_id = cell(0);
    auto task = parse_task(cell(1));
    if (!task) throw fail("unknown task '" + cell(1) + "'");
    rec.task = *task;
    rec.estimated_model = cell(2);
    rec.train_dataset = cell(3);
    rec.test_dataset = cell(4);
    rec.src_lang = cell(5);
    rec.tgt_lang = cell(6);
    rec.metric_name = cell(7);
    auto score = csv::parse_double(cell(8));
    if (!score) throw fail("bad score '" + cell(8) + "'");
    rec.score = *score;
    auto seen = parse_bool(cell(9));
    if (!seen) throw fail("bad seen_by_estimated_model '" + cell(9) + "'");
    rec.seen_by_estimated_model = *seen;
    auto group = parse_corpus_group(cell(10));
    if (!group) throw fail("unknown corpus_group '" + cell(10) + "'");
    rec.corpus_group = *group;
    if (!cell(11).empty()) {
      auto j = csv::parse_int(cell(11));
      if (!j) throw fail("bad joshi_class '" + cell(11) + "'");
      rec.joshi_class = static_cast<int>(*j);
    }
    if (family_col) rec.language_family = std::string(csv::trim(row[*family_col]));
    for (const auto& [id, c] : proxy_cols) {
      const auto text = csv::trim(row[c]);
      if (text.empty()) {
        rec.proxy_scores[id] = std::nullopt;
        continue;
      }
      auto v = csv::parse_double(text);
      if (!v) throw fail("bad proxy score '" + std::string(text) + "'");
      rec.proxy_scores[id] = *v;
    }
    if (rec.src_lang.empty() || rec.tgt_lang.empty()) throw fail("empty language code");
    try {
      validate_record(rec);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail(), path, line);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<PerformanceRecord> load_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open records", path);
  std::vector<PerformanceRecord> out;
  std::vector<std::size_t> lines;
  std::set<std::string> roster;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (csv::trim(text).empty()) continue;
    PerformanceRecord rec;
    try {
      const auto j = nlohmann::json::parse(text);
      rec.record_id = j.at("record_id").get<std::string>();
      auto task = parse_task(j.at("task").get<std::string>());
      if (!task) throw Error(ErrorCode::parse_error, "unknown task", path, line);
      rec.task = *task;
      rec.estimated_model = j.at("estimated_model").get<std::string>();
      rec.train_dataset = j.at("train_dataset").get<std::string>();
      rec.test_dataset = j.at("test_dataset").get<std::string>();
      rec.src_lang = j.at("src_lang").get<std::string>();
      rec.tgt_lang = j.at("tgt_lang").get<std::string>();
      rec.metric_name = j.at("metric_name").get<std::string>();
      rec.score = j.at("score").get<double>();
      rec.seen_by_estimated_model = j.value("seen_by_estimated_model", true);
      auto group = parse_corpus_group(j.value("corpus_group", std::string("other")));
      if (!group) throw Error(ErrorCode::parse_error, "unknown corpus_group", path, line);
      rec.corpus_group = *group;
      if (j.contains("joshi_class") && !j["joshi_class"].is_null()) rec.joshi_class = j["joshi_class"].get<int>();
      rec.language_family = j.value("language_family", std::string());
      if (j.contains("proxy_scores")) {
        for (const auto& [id, v] : j["proxy_scores"].items()) {
          rec.proxy_scores[id] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
          roster.insert(id);
        }
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::parse_error, ex.what(), path, line);
    }
    try {
      validate_record(rec);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail(), path, line);
    }
    out.push_back(std::move(rec));
    lines.push_back(line);
  }
  // The roster is the union of proxy ids; absent entries become missing.
  for (auto& rec : out)
    for (const auto& id : roster) rec.proxy_scores.try_emplace(id, std::nullopt);
  return out;
}

}  // namespace detail

/// Loads records from CSV, or from JSON lines when the path ends in .jsonl.
/// Every record carries the full proxy roster; unobserved proxies are empty.
inline std::vector<PerformanceRecord> load_records(const std::string& path) {
  const bool jsonl = path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0;
  auto records = jsonl ? detail::load_records_jsonl(path) : detail::load_records_csv(path);
  std::set<std::string> ids;
  for (const auto& r : records)
    if (!ids.insert(r.record_id).second)
      throw Error(ErrorCode::duplicate_id, "duplicate record_id '" + r.record_id + "'", path);
  return records;
}

/// Proxy ids present in any record, sorted.
inline std::vector<std::string> proxy_roster(std::span<const PerformanceRecord> records) {
  std::set<std::string> ids;
  for (const auto& r : records)
    for (const auto& [id, v] : r.proxy_scores) ids.insert(id);
  return {ids.begin(), ids.end()};
}

inline std::string format_records_csv(std::span<const PerformanceRecord> records) {
  const auto roster = proxy_roster(records);
  std::vector<std::string> header = {"record_id",   "task",  "estimated_model",         "train_dataset",
                                     "test_dataset", "src_lang", "tgt_lang",              "metric_name",
                                     "score",        "seen_by_estimated_model", "corpus_group", "joshi_class",
                                     "language_family"};
  for (const auto& id : roster) header.push_back("proxy:" + id);
  std::string out = csv::join(header) + "\n";
  for (const auto& r : records) {
    std::vector<std::string> row = {r.record_id,
                                    std::string(to_string(r.task)),
                                    r.estimated_model,
                                    r.train_dataset,
                                    r.test_dataset,
                                    r.src_lang,
                                    r.tgt_lang,
                                    r.metric_name,
                                    csv::format_exact(r.score),
                                    r.seen_by_estimated_model ? "true" : "false",
                                    std::string(to_string(r.corpus_group)),
                                    r.joshi_class ? std::to_string(*r.joshi_class) : std::string(),
                                    r.language_family};
    for (const auto& id : roster) {
      auto it = r.proxy_scores.find(id);
      row.push_back(it != r.proxy_scores.end() && it->second ? csv::format_exact(*it->second) : std::string());
    }
    out += csv::join(row) + "\n";
  }
  return out;
}

namespace detail {
inline auto record_key(const PerformanceRecord& r) {
  return std::tie(r.task, r.estimated_model, r.train_dataset, r.test_dataset, r.src_lang, r.tgt_lang,
                  r.metric_name, r.seen_by_estimated_model, r.corpus_group, r.joshi_class, r.language_family);
}
}  // namespace detail

/// Collapses repeated runs of one configuration into a single record. The score
/// and each proxy score become the mean over the runs where they are present.
inline PerformanceRecord average_proxy_scores(std::span<const PerformanceRecord> runs) {
  if (runs.empty()) throw Error(ErrorCode::empty, "no runs to average");
  PerformanceRecord out = runs.front();
  double score_sum = 0.0;
  std::map<std::string, std::pair<double, int>> proxy_sums;
  for (const auto& run : runs) {
    if (detail::record_key(run) != detail::record_key(runs.front()))
      throw Error(ErrorCode::key_mismatch, "run '" + run.record_id + "' differs from '" +
                                               runs.front().record_id + "' in its key fields");
    score_sum += run.score;
    for (const auto& [id, v] : run.proxy_scores) {
      auto& acc = proxy_sums[id];
      if (v) {
        acc.first += *v;
        ++acc.second;
      }
    }
  }
  out.score = score_sum / static_cast<double>(runs.size());
  out.proxy_scores.clear();
  for (const auto& [id, acc] : proxy_sums)
    out.proxy_scores[id] = acc.second ? std::optional<double>(acc.first / acc.second) : std::nullopt;
  return out;
}

/// Groups records by key fields (first-occurrence order) and averages each group.
inline std::vector<PerformanceRecord> average_runs(std::span<const PerformanceRecord> records) {
  std::vector<std::vector<PerformanceRecord>> groups;
  std::vector<const PerformanceRecord*> heads;
  for (const auto& r : records) {
    auto it = std::find_if(heads.begin(), heads.end(),
                           [&](const PerformanceRecord* h) { return detail::record_key(*h) == detail::record_key(r); });
    if (it == heads.end()) {
      heads.push_back(&r);
      groups.push_back({r});
    } else {
      groups[static_cast<std::size_t>(it - heads.begin())].push_back(r);
    }
  }
  std::vector<PerformanceRecord> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(average_proxy_scores(g));
  return out;
}

// ---------------------------------------------------------------------------
// Feature schema and design matrix

enum class FeatureGroup { language, dataset, proxy };

constexpr std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::language: return "language";
    case FeatureGroup::dataset: return "dataset";
    case FeatureGroup::proxy: return "proxy";
  }
  return "";
}

inline std::optional<FeatureGroup> parse_feature_group(std::string_view s) {
  if (s == "language") return FeatureGroup::language;
  if (s == "dataset") return FeatureGroup::dataset;
  if (s == "proxy") return FeatureGroup::proxy;
  return std::nullopt;
}

/// Enabled feature groups. Ordered so it can key a map.
struct FeatureGroups {
  bool language = true;
  bool dataset = true;
  bool proxy = true;

  bool any() const { return language || dataset || proxy; }
  bool contains(FeatureGroup g) const {
    return g == FeatureGroup::language ? language : g == FeatureGroup::dataset ? dataset : proxy;
  }
  auto operator<=>(const FeatureGroups&) const = default;

  /// Canonical label, e.g. "proxy+language+dataset".
  std::string label() const {
    std::string s;
    auto add = [&](bool on, std::string_view name) {
      if (!on) return;
      if (!s.empty()) s += "+";
      s += name;
    };
    add(proxy, "proxy");
    add(language, "language");
    add(dataset, "dataset");
    return s;
  }

  static FeatureGroups from_list(std::span<const std::string> names) {
    FeatureGroups g{false, false, false};
    for (const auto& n : names) {
      auto fg = parse_feature_group(n);
      if (!fg) throw Error(ErrorCode::invalid_argument, "unknown feature group '" + n + "'");
      if (*fg == FeatureGroup::language) g.language = true;
      if (*fg == FeatureGroup::dataset) g.dataset = true;
      if (*fg == FeatureGroup::proxy) g.proxy = true;
    }
    if (!g.any()) throw Error(ErrorCode::invalid_argument, "at least one feature group must be enabled");
    return g;
  }
};

struct FeatureColumn {
  std::string name;
  FeatureGroup group;

  bool operator==(const FeatureColumn&) const = default;
};

/// Ordered columns: language distances, dataset features, then one column per proxy.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  static FeatureSchema make(FeatureGroups groups, std::span<const std::string> proxies) {
    if (!groups.any()) throw Error(ErrorCode::invalid_argument, "at least one feature group must be enabled");
    FeatureSchema s;
    if (groups.language)
      for (auto k : kDistanceKindNames) s.columns_.push_back({"lang:" + std::string(k), FeatureGroup::language});
    if (groups.dataset)
      for (auto n : kDatasetFeatureNames) s.columns_.push_back({std::string(n), FeatureGroup::dataset});
    if (groups.proxy)
      for (const auto& p : proxies) s.columns_.push_back({"proxy:" + p, FeatureGroup::proxy});
    return s;
  }

  static FeatureSchema from_columns(std::vector<FeatureColumn> columns) {
    FeatureSchema s;
    s.columns_ = std::move(columns);
    return s;
  }

  const std::vector<FeatureColumn>& columns() const noexcept { return columns_; }
  std::size_t size() const noexcept { return columns_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
  }

  /// FNV-1a 64 over group and name of every column, as 16 hex digits.
  std::string fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::string_view s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& c : columns_) {
      mix(to_string(c.group));
      mix(":");
      mix(c.name);
      mix("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<FeatureColumn> columns_;
};

/// Row-major n x d matrix. Masked cells hold NaN and must be read through the mask.
struct DesignMatrix {
  FeatureSchema schema;
  std::size_t n = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;
  std::vector<double> targets;
  std::vector<std::string> row_ids;
  std::vector<std::string> src_langs;
  std::vector<std::string> tgt_langs;

  std::size_t d() const noexcept { return schema.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * d() + j]; }
  bool is_missing(std::size_t i, std::size_t j) const { return missing[i * d() + j] != 0; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * d(), d()}; }

  DesignMatrix select(std::span<const std::size_t> rows) const {
    DesignMatrix out;
    out.schema = schema;
    out.n = rows.size();
    const auto dd = d();
    out.values.reserve(rows.size() * dd);
    out.missing.reserve(rows.size() * dd);
    for (auto r : rows) {
      out.values.insert(out.values.end(), values.begin() + r * dd, values.begin() + (r + 1) * dd);
      out.missing.insert(out.missing.end(), missing.begin() + r * dd, missing.begin() + (r + 1) * dd);
      out.targets.push_back(targets[r]);
      out.row_ids.push_back(row_ids[r]);
      out.src_langs.push_back(src_langs[r]);
      out.tgt_langs.push_back(tgt_langs[r]);
    }
    return out;
  }

  /// Appends one row. `cells` are in schema order; nullopt marks a missing value.
  void push_row(std::span<const std::optional<double>> cells, double target, std::string id,
                std::string src = {}, std::string tgt = {}) {
    if (cells.size() != d()) throw Error(ErrorCode::dim_mismatch, "row width does not match schema");
    for (const auto& c : cells) {
      values.push_back(c ? *c : std::numeric_limits<double>::quiet_NaN());
      missing.push_back(c ? 0 : 1);
    }
    targets.push_back(target);
    row_ids.push_back(std::move(id));
    src_langs.push_back(std::move(src));
    tgt_langs.push_back(std::move(tgt));
    ++n;
  }
};

/// Lookup tables the design matrix draws features from. Either may be null when
/// the corresponding group is disabled.
struct FeatureSources {
  const DatasetFeatureMap* dataset_features = nullptr;
  const LanguageDistanceTable* language_table = nullptr;
};

inline DesignMatrix build_design_matrix(std::span<const PerformanceRecord> records, const FeatureSchema& schema,
                                        const FeatureSources& sources) {
  DesignMatrix m;
  m.schema = schema;
  const auto& cols = schema.columns();
  bool need_lang = false, need_data = false;
  for (const auto& c : cols) {
    need_lang = need_lang || c.group == FeatureGroup::language;
    need_data = need_data || c.group == FeatureGroup::dataset;
  }
  if (need_lang && !sources.language_table)
    throw Error(ErrorCode::missing_feature, "language features requested but no distance table supplied");
  if (need_data && !sources.dataset_features)
    throw Error(ErrorCode::missing_feature, "dataset features requested but no feature table supplied");

  std::vector<std::optional<double>> cells(cols.size());
  for (const auto& r : records) {
    std::optional<LanguageFeatureBlock> lang;
    const DatasetFeatureBlock* data = nullptr;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& col = cols[j];
      switch (col.group) {
        case FeatureGroup::language: {
          if (!lang) {
            try {
              lang = language_features(*sources.language_table, r.src_lang, r.tgt_lang);
            } catch (const Error& e) {
              throw Error(ErrorCode::missing_feature,
                          "record '" + r.record_id + "', column '" + col.name + "': " + e.detail());
            }
          }
          auto kind = parse_distance_kind(std::string_view(col.name).substr(5));
          cells[j] = (*lang)[*kind];
          break;
        }
        case FeatureGroup::dataset: {
          if (!data) {
            auto it = sources.dataset_features->find({r.train_dataset, r.test_dataset});
            if (it == sources.dataset_features->end())
              throw Error(ErrorCode::missing_feature, "record '" + r.record_id + "', column '" + col.name +
                                                          "': no features for dataset pair (" + r.train_dataset +
                                                          ", " + r.test_dataset + ")");
            data = &it->second;
          }
          const auto pos = std::find(kDatasetFeatureNames.begin(), kDatasetFeatureNames.end(), col.name);
          cells[j] = data->values()[static_cast<std::size_t>(pos - kDatasetFeatureNames.begin())];
          break;
        }
        case FeatureGroup::proxy: {
          auto it = r.proxy_scores.find(col.name.substr(6));
          cells[j] = it == r.proxy_scores.end() ? std::nullopt : it->second;
          break;
        }
      }
    }
    m.push_row(cells, r.score, r.record_id, r.src_lang, r.tgt_lang);
  }
  return m;
}

}  // namespace proxylm
