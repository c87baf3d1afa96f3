#pragma once

// Config-driven wiring: corpora -> dataset features, records -> design matrix
// -> experiment -> report. Shared by the CLI and the integration tests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "proxylm/corpus_features.hpp"
#include "proxylm/csv.hpp"
#include "proxylm/error.hpp"
#include "proxylm/experiments.hpp"
#include "proxylm/lang_features.hpp"
#include "proxylm/records.hpp"
#include "proxylm/regressors/model.hpp"
#include "proxylm/regressors/presets.hpp"
#include "proxylm/report.hpp"

namespace proxylm {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::optional<std::size_t> threads;
};

/// Everything an experiment needs, loaded from one config file. Not movable:
/// `experiment.sources` points into this object.
struct Workspace {
  std::filesystem::path config_path;
  nlohmann::json config;
  std::vector<PerformanceRecord> records;
  std::vector<PerformanceRecord> test_records;
  DatasetFeatureMap dataset_features;
  LanguageDistanceTable language_table;
  bool has_dataset_features = false;
  bool has_language_table = false;
  ExperimentConfig experiment;
  std::vector<FeatureGroups> ablation_sets;
  ReportFormat report_format = ReportFormat::markdown;
  double lowess_frac = 0.5;
  std::vector<std::filesystem::path> inputs;  // every file read, in read order

  Workspace() = default;
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
};

namespace pipeline_detail {

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::io_error, "cannot open config", p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset is the best location nlohmann offers
    throw Error(ErrorCode::parse_error, e.what(), p.string());
  }
}

inline std::filesystem::path resolve(const Workspace& ws, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = ws.config_path.parent_path() / path;
  return path.lexically_normal();
}

inline std::filesystem::path input(Workspace& ws, const std::string& p) {
  auto path = resolve(ws, p);
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::io_error, "input file not found", path.string());
  ws.inputs.push_back(path);
  return path;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::filesystem::path& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::parse_error, std::string("config field '") + key + "' has the wrong type", where.string());
  }
}

inline RegressorParams base_params(const std::string& kind) {
  if (kind == "gbt" || kind == "xgboost") return GbtParams{};
  if (kind == "lgbm") return preset("lgbm_default");
  if (kind == "poly" || kind == "poly2") return preset("poly_default");
  if (kind == "poly3") return preset("poly3_default");
  if (kind == "mf") return preset("mf_default");
  throw Error(ErrorCode::invalid_argument, "unknown regressor kind '" + kind + "' (gbt, xgboost, lgbm, poly2, poly3, mf)");
}

/// Grid given as a list of override objects, or as an object of value lists
/// expanded to their cartesian product (keys in sorted order, last key fastest).
inline std::vector<RegressorParams> expand_grid(const RegressorParams& base, const nlohmann::json& grid) {
  std::vector<RegressorParams> out;
  if (grid.is_array()) {
    for (const auto& g : grid) out.push_back(apply_overrides(base, g));
  } else if (grid.is_object()) {
    std::vector<nlohmann::json> points = {nlohmann::json::object()};
    for (const auto& [key, values] : grid.items()) {
      if (!values.is_array() || values.empty())
        throw Error(ErrorCode::parse_error, "grid entry '" + key + "' must be a non-empty list");
      std::vector<nlohmann::json> next;
      for (const auto& p : points)
        for (const auto& v : values) {
          auto q = p;
          q[key] = v;
          next.push_back(std::move(q));
        }
      points = std::move(next);
    }
    for (const auto& p : points) out.push_back(apply_overrides(base, p));
  } else {
    throw Error(ErrorCode::parse_error, "regressor grid must be a list or an object");
  }
  if (out.empty()) throw Error(ErrorCode::invalid_argument, "regressor grid is empty");
  return out;
}

inline std::vector<RegressorParams> regressor_grid(const nlohmann::json& spec, const Overrides& ov) {
  RegressorParams base;
  if (ov.preset) {
    base = preset(*ov.preset);
  } else if (spec.contains("preset")) {
    base = preset(spec.at("preset").get<std::string>());
  } else {
    base = base_params(spec.value("kind", std::string("gbt")));
  }
  if (spec.contains("params")) base = apply_overrides(base, spec.at("params"));
  if (spec.contains("grid")) return expand_grid(base, spec.at("grid"));
  return {base};
}

inline FeatureGroups groups_from(const nlohmann::json& j) {
  return FeatureGroups::from_list(j.get<std::vector<std::string>>());
}

}  // namespace pipeline_detail

/// Profiles every corpus named under "corpora" and computes features for the
/// requested (train, test) pairs. Corpus entries carry either "path" or
/// "source"/"target"; "corpus_side" picks source (default), target or concat.
inline DatasetFeatureMap compute_corpus_features(Workspace& ws, const nlohmann::json& spec,
                                                 std::set<std::pair<std::string, std::string>> pairs) {
  using namespace pipeline_detail;
  const auto mode_name = get_or<std::string>(spec, "tokenize", "unicode_words", ws.config_path);
  TokenizeMode mode;
  if (mode_name == "unicode_words") mode = TokenizeMode::unicode_words;
  else if (mode_name == "pretokenized_whitespace") mode = TokenizeMode::pretokenized_whitespace;
  else throw Error(ErrorCode::invalid_argument, "unknown tokenize mode '" + mode_name + "'", ws.config_path.string());
  const auto side = get_or<std::string>(spec, "corpus_side", "source", ws.config_path);
  if (side != "source" && side != "target" && side != "concat")
    throw Error(ErrorCode::invalid_argument, "corpus_side must be source, target or concat", ws.config_path.string());

  std::map<std::string, DatasetProfile> profiles;
  if (!spec.contains("corpora") || !spec.at("corpora").is_array())
    throw Error(ErrorCode::parse_error, "'corpora' must be a list", ws.config_path.string());
  for (const auto& c : spec.at("corpora")) {
    const auto id = c.at("dataset_id").get<std::string>();
    std::vector<TokenSequence> sentences;
    auto add = [&](const std::string& p) {
      auto s = load_corpus(input(ws, p).string(), mode);
      sentences.insert(sentences.end(), s.begin(), s.end());
    };
    if (c.contains("path")) {
      add(c.at("path").get<std::string>());
    } else {
      if (side != "target") add(c.at("source").get<std::string>());
      if (side != "source") add(c.at("target").get<std::string>());
    }
    if (!profiles.emplace(id, profile(id, sentences)).second)
      throw Error(ErrorCode::duplicate_id, "corpus '" + id + "' listed twice", ws.config_path.string());
  }

  std::map<std::string, EmbeddingSet> embeddings;
  if (spec.contains("embeddings")) embeddings = load_embeddings(input(ws, spec.at("embeddings").get<std::string>()).string());

  if (spec.contains("pairs"))
    for (const auto& p : spec.at("pairs")) pairs.emplace(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  if (pairs.empty())
    for (const auto& [a, pa] : profiles)
      for (const auto& [b, pb] : profiles) pairs.emplace(a, b);

  DatasetFeatureMap out;
  for (const auto& [train, test] : pairs) {
    auto a = profiles.find(train), b = profiles.find(test);
    if (a == profiles.end() || b == profiles.end())
      throw Error(ErrorCode::missing_feature, "no corpus for dataset '" + (a == profiles.end() ? train : test) + "'",
                  ws.config_path.string());
    std::optional<std::pair<EmbeddingSet, EmbeddingSet>> emb;
    auto ea = embeddings.find(train), eb = embeddings.find(test);
    if (ea != embeddings.end() && eb != embeddings.end()) emb.emplace(ea->second, eb->second);
    out.emplace(std::make_pair(train, test), dataset_features(a->second, b->second, emb));
  }
  return out;
}

/// Loads the config and every input it names. Relative paths resolve against
/// the config file's directory.
inline std::unique_ptr<Workspace> load_workspace(const std::filesystem::path& config_path, const Overrides& ov = {}) {
  using namespace pipeline_detail;
  auto ws = std::make_unique<Workspace>();
  ws->config_path = config_path;
  ws->inputs.push_back(config_path);
  ws->config = read_json(config_path);
  const auto& j = ws->config;
  if (!j.is_object()) throw Error(ErrorCode::parse_error, "config must be a JSON object", config_path.string());

  try {
    if (j.contains("records")) ws->records = load_records(input(*ws, j.at("records").get<std::string>()).string());
    if (j.contains("test_records"))
      ws->test_records = load_records(input(*ws, j.at("test_records").get<std::string>()).string());
    if (get_or<bool>(j, "average_runs", false, config_path)) {
      ws->records = average_runs(ws->records);
      ws->test_records = average_runs(ws->test_records);
    }

    if (j.contains("dataset_features")) {
      ws->dataset_features = load_feature_csv(input(*ws, j.at("dataset_features").get<std::string>()).string());
      ws->has_dataset_features = true;
    } else if (j.contains("corpora")) {
      std::set<std::pair<std::string, std::string>> needed;
      for (const auto* list : {&ws->records, &ws->test_records})
        for (const auto& r : *list) needed.emplace(r.train_dataset, r.test_dataset);
      ws->dataset_features = compute_corpus_features(*ws, j, std::move(needed));
      ws->has_dataset_features = true;
    }
    if (j.contains("language_distances")) {
      ws->language_table = load_distance_table(input(*ws, j.at("language_distances").get<std::string>()).string());
      ws->has_language_table = true;
    }

    auto& e = ws->experiment;
    e.records = ws->records;
    e.test_records = ws->test_records;
    e.sources.dataset_features = ws->has_dataset_features ? &ws->dataset_features : nullptr;
    e.sources.language_table = ws->has_language_table ? &ws->language_table : nullptr;
    if (j.contains("estimated_model")) e.estimated_model = j.at("estimated_model").get<std::string>();
    e.grid = regressor_grid(j.value("regressor", nlohmann::json::object()), ov);
    if (j.contains("feature_groups")) e.groups = groups_from(j.at("feature_groups"));
    if (j.contains("proxies")) e.proxies = j.at("proxies").get<std::vector<std::string>>();

    const auto split = j.value("split", nlohmann::json::object());
    const auto kind_name = get_or<std::string>(split, "kind", "random", config_path);
    const auto kind = parse_split_kind(kind_name);
    if (!kind) throw Error(ErrorCode::invalid_argument, "unknown split kind '" + kind_name + "'", config_path.string());
    e.split.kind = *kind;
    e.split.ratio = get_or<double>(split, "ratio", 0.7, config_path);
    if (split.contains("held_out_language")) e.split.held_out_language = split.at("held_out_language").get<std::string>();
    e.split.seed = ov.seed ? *ov.seed : get_or<std::uint64_t>(j, "seed", 0, config_path);
    e.repeats = get_or<std::size_t>(j, "repeats", 5, config_path);
    e.cv_folds = get_or<std::size_t>(j, "cv_folds", 10, config_path);
    e.threads = ov.threads ? *ov.threads : get_or<std::size_t>(j, "threads", 1, config_path);

    if (j.contains("ablation")) {
      for (const auto& g : j.at("ablation")) ws->ablation_sets.push_back(groups_from(g));
    } else {
      ws->ablation_sets = default_ablation_sets();
    }
    const auto report = j.value("report", nlohmann::json::object());
    const auto fmt = get_or<std::string>(report, "format", "markdown", config_path);
    if (fmt == "markdown") ws->report_format = ReportFormat::markdown;
    else if (fmt == "csv") ws->report_format = ReportFormat::csv;
    else throw Error(ErrorCode::invalid_argument, "report format must be markdown or csv", config_path.string());
    ws->lowess_frac = get_or<double>(report, "lowess_frac", 0.5, config_path);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::parse_error, ex.what(), config_path.string());
  }
  return ws;
}

/// Feature schema for a workspace: roster from the config or the records.
inline FeatureSchema workspace_schema(const Workspace& ws, FeatureGroups groups) {
  std::vector<PerformanceRecord> filtered;
  for (const auto& r : ws.records)
    if (!ws.experiment.estimated_model || r.estimated_model == *ws.experiment.estimated_model) filtered.push_back(r);
  const auto roster = ws.experiment.proxies ? *ws.experiment.proxies : proxy_roster(filtered);
  return FeatureSchema::make(groups, roster);
}

inline std::string format_predictions_csv(std::span<const PredictionRow> rows) {
  std::string s = "record_id,split,true,pred\n";
  for (const auto& r : rows)
    s += csv::join({r.record_id, r.split_label, csv::format_exact(r.truth), csv::format_exact(r.prediction)}) + "\n";
  return s;
}

/// Runs one experiment (or the ablation sets) and writes results.json,
/// predictions.csv and the report files. Returns the names written.
inline std::vector<std::string> run_pipeline(Workspace& ws, const std::filesystem::path& out_dir, bool ablate) {
  std::vector<std::pair<std::string, ExperimentResult>> results;
  if (ablate) {
    for (auto& [groups, r] : run_ablation(ws.experiment, ws.ablation_sets)) results.emplace_back(groups.label(), std::move(r));
  } else {
    results.emplace_back(ws.experiment.groups.label(), run_experiment(ws.experiment));
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create output directory: " + ec.message(), out_dir.string());
  std::vector<std::string> written;

  nlohmann::json doc = {{"split", to_string(ws.experiment.split.kind)},
                        {"seed", ws.experiment.split.seed},
                        {"repeats", ws.experiment.repeats},
                        {"cv_folds", ws.experiment.cv_folds},
                        {"results", nlohmann::json::array()}};
  for (const auto& [label, r] : results) {
    auto rj = to_json(r);
    rj["configuration"] = label;
    doc["results"].push_back(std::move(rj));
  }
  csv::write_file((out_dir / "results.json").string(), doc.dump(2) + "\n");
  written.push_back("results.json");
  csv::write_file((out_dir / "predictions.csv").string(), format_predictions_csv(results.front().second.predictions));
  written.push_back("predictions.csv");

  ReportInput in;
  in.records = ws.experiment.records;
  in.records.insert(in.records.end(), ws.experiment.test_records.begin(), ws.experiment.test_records.end());
  in.format = ws.report_format;
  in.lowess_frac = ws.lowess_frac;
  const auto& primary = results.front().second;
  if (primary.final_model)
    if (const auto* gbt = std::get_if<GbtModel>(&*primary.final_model)) {
      try {
        in.importance = gbt_importance(*gbt);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::no_splits) throw;
        in.importance = std::map<std::string, double>{};
      }
    }
  in.results = std::move(results);
  for (auto& f : emit_report(out_dir, in)) written.push_back(std::move(f));
  return written;
}

/// Fits the first grid point (or the CV winner when the grid has several) on
/// every record that passes the filter.
inline std::pair<RegressorModel, FeatureSchema> train_workspace(const Workspace& ws) {
  const auto& e = ws.experiment;
  std::vector<PerformanceRecord> records;
  for (const auto& r : e.records)
    if (!e.estimated_model || r.estimated_model == *e.estimated_model) records.push_back(r);
  if (records.empty()) throw Error(ErrorCode::too_few_records, "no records to train on", ws.config_path.string());
  const auto schema = workspace_schema(ws, e.groups);
  const auto m = build_design_matrix(records, schema, e.sources);
  std::vector<RegressorParams> grid;
  for (const auto& p : e.grid) grid.push_back(with_seed(p, e.split.seed));
  auto chosen = grid.front();
  if (grid.size() > 1) chosen = kfold_cv(m, e.cv_folds, grid, e.split.seed).best_params;
  return {fit(m, chosen), schema};
}

}  // namespace proxylm
