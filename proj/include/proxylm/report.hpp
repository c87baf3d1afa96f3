#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "proxylm/csv.hpp"
#include "proxylm/error.hpp"
#include "proxylm/experiments.hpp"
#include "proxylm/records.hpp"

namespace proxylm {

/// Locally weighted linear regression, one pass, no robustness iterations.
/// Each point is fitted from its k = ceil(frac * n) nearest neighbours in x
/// (at least 2), weighted by the tricube of distance over the k-th distance.
/// Returns fitted values in input order.
inline std::vector<double> lowess(std::span<const double> x, std::span<const double> y, double frac) {
  if (x.size() != y.size())
    throw Error(ErrorCode::length_mismatch, "lowess: x has " + std::to_string(x.size()) + " values, y has " +
                                                std::to_string(y.size()));
  if (!(frac > 0.0 && frac <= 1.0)) throw Error(ErrorCode::invalid_argument, "lowess: frac must be in (0, 1]");
  if (std::set<double>(x.begin(), x.end()).size() < 2)
    throw Error(ErrorCode::too_few_points, "lowess needs at least 2 points with distinct x");
  const auto n = x.size();
  auto k = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 2, n);

  std::vector<double> out(n);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[j] = {std::abs(x[j] - x[i]), j};
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    const double h = dist[k - 1].first;
    double sw = 0.0, sx = 0.0, sy = 0.0;
    std::vector<double> w(k);
    for (std::size_t q = 0; q < k; ++q) {
      if (h <= 0.0) {
        w[q] = 1.0;
      } else {
        const double u = dist[q].first / h;
        const double c = u < 1.0 ? 1.0 - u * u * u : 0.0;
        w[q] = c * c * c;
      }
      const auto j = dist[q].second;
      sw += w[q];
      sx += w[q] * x[j];
      sy += w[q] * y[j];
    }
    if (sw <= 0.0) {
      // Only the k-th neighbour sits at distance h; fall back to equal weights.
      std::fill(w.begin(), w.end(), 1.0);
      sw = static_cast<double>(k);
      sx = sy = 0.0;
      for (std::size_t q = 0; q < k; ++q) {
        sx += x[dist[q].second];
        sy += y[dist[q].second];
      }
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      const auto j = dist[q].second;
      sxx += w[q] * (x[j] - mx) * (x[j] - mx);
      sxy += w[q] * (x[j] - mx) * (y[j] - my);
    }
    const double spread = std::max(h, 1e-300);
    out[i] = sxx > 1e-12 * spread * spread * sw ? my + sxy / sxx * (x[i] - mx) : my;
  }
  return out;
}

/// 1 - SS_res / SS_tot.
inline double r_squared(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw Error(ErrorCode::length_mismatch, "r_squared: length mismatch");
  if (targets.empty()) throw Error(ErrorCode::empty, "r_squared of an empty set");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    res += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
    tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (tot == 0.0) throw Error(ErrorCode::zero_variance, "r_squared: targets have zero variance");
  return 1.0 - res / tot;
}

struct ScatterPoint {
  std::string record_id;
  double truth = 0.0;
  double prediction = 0.0;
  std::string language;
  std::optional<int> joshi_class;
  std::string language_family;
};

/// Joins predictions with record metadata, sorted by record id.
inline std::vector<ScatterPoint> build_scatter(std::span<const PredictionRow> predictions,
                                               std::span<const PerformanceRecord> records) {
  std::map<std::string, const PerformanceRecord*> by_id;
  for (const auto& r : records) by_id[r.record_id] = &r;
  std::vector<ScatterPoint> out;
  for (const auto& p : predictions) {
    ScatterPoint s{p.record_id, p.truth, p.prediction, {}, std::nullopt, {}};
    if (auto it = by_id.find(p.record_id); it != by_id.end()) {
      s.language = record_language(*it->second);
      s.joshi_class = it->second->joshi_class;
      s.language_family = it->second->language_family;
    }
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.record_id < b.record_id; });
  return out;
}

struct GroupRmse {
  std::string group;
  std::size_t n = 0;
  double rmse = 0.0;
};

template <typename KeyFn>
std::vector<GroupRmse> grouped_rmse(std::span<const ScatterPoint> points, KeyFn key) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& p : points) {
    auto& g = groups[key(p)];
    g.first.push_back(p.prediction);
    g.second.push_back(p.truth);
  }
  std::vector<GroupRmse> out;
  for (const auto& [name, g] : groups) out.push_back({name, g.first.size(), rmse(g.first, g.second)});
  return out;
}

enum class ReportFormat { markdown, csv };

struct ReportInput {
  std::vector<std::pair<std::string, ExperimentResult>> results;  // label -> result; first one drives scatter
  std::vector<PerformanceRecord> records;                         // metadata for grouping
  std::optional<std::map<std::string, double>> importance;
  ReportFormat format = ReportFormat::markdown;
  double lowess_frac = 0.5;
};

namespace report_detail {

inline std::string fx(double v) { return csv::format_fixed(v, 4); }

inline void write(const std::filesystem::path& p, const std::string& text, std::vector<std::string>& written) {
  csv::write_file(p.string(), text);
  written.push_back(p.filename().string());
}

inline std::string groups_csv(const std::vector<GroupRmse>& groups) {
  std::string s = "group,n,rmse\n";
  for (const auto& g : groups) s += csv::escape(g.group) + "," + std::to_string(g.n) + "," + fx(g.rmse) + "\n";
  return s;
}

}  // namespace report_detail

/// Writes the summary table, per-group RMSEs, the scatter series and feature
/// importances into `out_dir`. All numbers carry 4 decimals, so identical
/// inputs produce byte-identical files. Returns the file names written.
inline std::vector<std::string> emit_report(const std::filesystem::path& out_dir, const ReportInput& in) {
  using report_detail::fx;
  if (in.results.empty()) throw Error(ErrorCode::invalid_argument, "report needs at least one experiment result");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::string> written;

  if (in.format == ReportFormat::markdown) {
    std::string s = "| configuration | RMSE (mean ± std) | repeats |\n|---|---|---|\n";
    for (const auto& [label, r] : in.results)
      s += "| " + label + " | " + fx(r.mean) + " ± " + fx(r.std) + " | " + std::to_string(r.per_repeat_rmse.size()) +
           " |\n";
    report_detail::write(out_dir / "summary.md", s, written);
  } else {
    std::string s = "configuration,mean_rmse,std_rmse,repeats\n";
    for (const auto& [label, r] : in.results)
      s += csv::escape(label) + "," + fx(r.mean) + "," + fx(r.std) + "," + std::to_string(r.per_repeat_rmse.size()) +
           "\n";
    report_detail::write(out_dir / "summary.csv", s, written);
  }

  const auto& primary = in.results.front().second;
  const auto points = build_scatter(primary.predictions, in.records);
  if (!points.empty()) {
    report_detail::write(out_dir / "groups_joshi.csv",
                         report_detail::groups_csv(grouped_rmse(points, [](const ScatterPoint& p) {
                           return p.joshi_class ? std::to_string(*p.joshi_class) : std::string("unknown");
                         })),
                         written);
    report_detail::write(out_dir / "groups_family.csv",
                         report_detail::groups_csv(grouped_rmse(points, [](const ScatterPoint& p) {
                           return p.language_family.empty() ? std::string("unknown") : p.language_family;
                         })),
                         written);
  }

  std::vector<double> truth, pred;
  for (const auto& p : points) {
    truth.push_back(p.truth);
    pred.push_back(p.prediction);
  }
  std::optional<std::vector<double>> trend;
  std::string r2 = "NA";
  if (!points.empty()) {
    try {
      trend = lowess(truth, pred, in.lowess_frac);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::too_few_points) throw;
    }
    try {
      r2 = fx(r_squared(pred, truth));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::zero_variance) throw;
    }
  }
  std::string s = "# r_squared=" + r2 + " lowess_frac=" + fx(in.lowess_frac) + "\n";
  s += "record_id,true,pred,lowess,language,joshi_class,language_family\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    s += csv::join({p.record_id, fx(p.truth), fx(p.prediction), trend ? fx((*trend)[i]) : std::string(), p.language,
                    p.joshi_class ? std::to_string(*p.joshi_class) : std::string(), p.language_family}) +
         "\n";
  }
  report_detail::write(out_dir / "scatter.csv", s, written);

  if (in.importance) {
    std::vector<std::pair<std::string, double>> rows(in.importance->begin(), in.importance->end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string t = "feature,importance\n";
    for (const auto& [name, v] : rows) t += csv::escape(name) + "," + fx(v) + "\n";
    report_detail::write(out_dir / "importance.csv", t, written);
  }
  return written;
}

}  // namespace proxylm
