// proxylm: command-line front end for feature extraction, training,
// prediction, experiments, ablations and importance listings.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "proxylm/proxylm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hex(const unsigned char* p, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
  }
  return s;
}

std::string sha256_bytes(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  return hex(md, len);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw proxylm::Error(proxylm::ErrorCode::io_error, "cannot read", p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  std::string command;
  std::string started = utc_now();
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string config_hash;

  void write(const fs::path& out_dir) const {
    json in = json::array();
    std::vector<fs::path> seen;
    for (const auto& p : inputs) {
      if (std::find(seen.begin(), seen.end(), p) != seen.end()) continue;
      seen.push_back(p);
      in.push_back({{"path", p.string()}, {"sha256", sha256_bytes(slurp(p))}});
    }
    json out = json::array();
    for (const auto& f : outputs) out.push_back({{"path", f}, {"sha256", sha256_bytes(slurp(out_dir / f))}});
    json doc = {{"tool", "proxylm"},   {"version", kVersion}, {"command", command},   {"seed", seed},
                {"config_sha256", config_hash}, {"inputs", in},  {"outputs", out},
                {"started", started},  {"finished", utc_now()}};
    proxylm::csv::write_file((out_dir / "manifest.json").string(), doc.dump(2) + "\n");
  }
};

int report_error(const proxylm::Error& e) {
  json j = {{"error", proxylm::to_string(e.code())}, {"message", e.detail()}};
  if (e.file()) j["file"] = *e.file();
  if (e.line()) j["line"] = *e.line();
  std::cerr << j.dump() << "\n";
  return 2;
}

void print_written(const fs::path& out, const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << (out / f).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predict large-model task performance from proxy-model scores, dataset and language features"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config, out = "out", model_path, records_path;
  std::uint64_t seed = 0;
  std::string preset_name;
  std::size_t threads = 1;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config, "JSON config file");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->capture_default_str();
  };
  auto tuning = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--preset", preset_name, "named regressor preset (overrides the config)");
    sub->add_option("--threads", threads, "worker threads, 0 = auto; never changes results");
  };

  auto* features = app.add_subcommand("features", "corpora -> dataset feature CSV");
  common(features, true);
  tuning(features);
  auto* train = app.add_subcommand("train", "records -> serialized model");
  common(train, true);
  tuning(train);
  auto* predict = app.add_subcommand("predict", "model + records -> predictions CSV");
  common(predict, true);
  tuning(predict);
  predict->add_option("--model", model_path, "model JSON from `train`")->required()->check(CLI::ExistingFile);
  predict->add_option("--records", records_path, "records to score (default: the config's records)");
  auto* experiment = app.add_subcommand("experiment", "config -> results and report");
  common(experiment, true);
  tuning(experiment);
  auto* ablate = app.add_subcommand("ablate", "feature-group ablation over the config's subsets");
  common(ablate, true);
  tuning(ablate);
  auto* importance = app.add_subcommand("importance", "feature importance of a GBT model");
  common(importance, false);
  tuning(importance);
  importance->add_option("--model", model_path, "model JSON; trained from --config when omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    proxylm::Overrides ov;
    for (auto* sub : {train, experiment, ablate, importance}) {
      if (!sub->parsed()) continue;
      if (sub->count("--seed")) ov.seed = seed;
      if (sub->count("--preset")) ov.preset = preset_name;
      if (sub->count("--threads")) ov.threads = threads;
    }
    const fs::path out_dir(out);
    Manifest manifest;
    std::vector<std::string> written;
    std::unique_ptr<proxylm::Workspace> ws;
    if (!config.empty()) {
      manifest.config_hash = sha256_bytes(slurp(config));
    }
    auto ensure_out = [&] {
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      if (ec) throw proxylm::Error(proxylm::ErrorCode::io_error, "cannot create output directory", out_dir.string());
    };

    if (features->parsed()) {
      manifest.command = "features";
      ws = std::make_unique<proxylm::Workspace>();
      ws->config_path = config;
      ws->inputs.push_back(config);
      ws->config = proxylm::pipeline_detail::read_json(config);
      const auto map = proxylm::compute_corpus_features(*ws, ws->config, {});
      ensure_out();
      proxylm::csv::write_file((out_dir / "dataset_features.csv").string(), proxylm::format_feature_csv(map));
      written.push_back("dataset_features.csv");
    } else if (train->parsed()) {
      manifest.command = "train";
      ws = proxylm::load_workspace(config, ov);
      auto [model, schema] = proxylm::train_workspace(*ws);
      ensure_out();
      proxylm::csv::write_file((out_dir / "model.json").string(),
                               proxylm::model_to_json(model, schema).dump(1) + "\n");
      written.push_back("model.json");
    } else if (predict->parsed()) {
      manifest.command = "predict";
      ws = proxylm::load_workspace(config, ov);
      const auto loaded = proxylm::model_from_json(proxylm::pipeline_detail::read_json(model_path));
      ws->inputs.push_back(model_path);
      std::vector<proxylm::PerformanceRecord> records = ws->records;
      if (!records_path.empty()) {
        records = proxylm::load_records(records_path);
        ws->inputs.push_back(records_path);
      }
      const auto m = proxylm::build_design_matrix(records, loaded.schema, ws->experiment.sources);
      const auto pred = proxylm::predict(loaded.model, m);
      std::vector<proxylm::PredictionRow> rows;
      for (std::size_t i = 0; i < m.n; ++i) rows.push_back({m.row_ids[i], m.targets[i], pred[i], ""});
      ensure_out();
      proxylm::csv::write_file((out_dir / "predictions.csv").string(), proxylm::format_predictions_csv(rows));
      written.push_back("predictions.csv");
    } else if (experiment->parsed() || ablate->parsed()) {
      manifest.command = experiment->parsed() ? "experiment" : "ablate";
      ws = proxylm::load_workspace(config, ov);
      written = proxylm::run_pipeline(*ws, out_dir, ablate->parsed());
    } else if (importance->parsed()) {
      manifest.command = "importance";
      std::optional<proxylm::LoadedModel> loaded;
      if (!model_path.empty()) {
        loaded = proxylm::model_from_json(proxylm::pipeline_detail::read_json(model_path));
      } else if (!config.empty()) {
        ws = proxylm::load_workspace(config, ov);
        auto [model, schema] = proxylm::train_workspace(*ws);
        loaded = proxylm::LoadedModel{std::move(model), std::move(schema)};
      } else {
        throw proxylm::Error(proxylm::ErrorCode::invalid_argument, "importance needs --model or --config");
      }
      const auto* gbt = std::get_if<proxylm::GbtModel>(&loaded->model);
      if (!gbt) throw proxylm::Error(proxylm::ErrorCode::invalid_argument, "importance is defined for GBT models only");
      auto imp = proxylm::gbt_importance(*gbt);
      std::vector<std::pair<std::string, double>> rows(imp.begin(), imp.end());
      std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      std::string s = "feature,importance\n";
      for (const auto& [name, v] : rows) s += proxylm::csv::escape(name) + "," + proxylm::csv::format_fixed(v, 4) + "\n";
      ensure_out();
      proxylm::csv::write_file((out_dir / "importance.csv").string(), s);
      written.push_back("importance.csv");
      if (!model_path.empty()) manifest.inputs.push_back(model_path);
    }

    if (ws) {
      manifest.inputs.insert(manifest.inputs.end(), ws->inputs.begin(), ws->inputs.end());
      manifest.seed = ws->experiment.split.seed;
    }
    manifest.outputs = written;
    manifest.write(out_dir);
    print_written(out_dir, written);
    std::cout << (out_dir / "manifest.json").string() << "\n";
    return 0;
  } catch (const proxylm::Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "InternalError"}, {"message", e.what()}}.dump() << "\n";
    return 3;
  }
}
