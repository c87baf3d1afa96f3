#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "proxylm/error.hpp"
#include "proxylm/random.hpp"
#include "proxylm/records.hpp"

namespace proxylm {

enum class TreeGrowth { depth_wise, leaf_wise };

/// Hyperparameters of the boosting engine. Names follow the XGBoost/LightGBM
/// conventions so preset tables carry over directly.
struct GbtParams {
  int n_estimators = 100;
  double eta = 0.3;
  double min_child_weight = 1.0;
  int max_depth = 6;  // 0 = unlimited (leaf_wise only)
  double gamma = 0.0;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  double reg_alpha = 0.0;
  double reg_lambda = 1.0;
  TreeGrowth growth = TreeGrowth::depth_wise;
  std::optional<int> num_leaves;  // leaf_wise only; defaults to 31
  int min_child_samples = 0;
  int max_bin = 0;  // 0 = exact enumeration of every distinct value
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& what) { return Error(ErrorCode::invalid_argument, "GbtParams: " + what); };
    if (n_estimators < 0) throw bad("n_estimators must be >= 0");
    if (!(eta > 0.0)) throw bad("eta must be > 0");
    if (min_child_weight < 0.0) throw bad("min_child_weight must be >= 0");
    if (max_depth < 0) throw bad("max_depth must be >= 0");
    if (gamma < 0.0) throw bad("gamma must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw bad("subsample must be in (0, 1]");
    if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) throw bad("colsample_bytree must be in (0, 1]");
    if (reg_alpha < 0.0 || reg_lambda < 0.0) throw bad("regularization must be >= 0");
    if (num_leaves && *num_leaves < 2) throw bad("num_leaves must be >= 2");
    if (min_child_samples < 0 || max_bin < 0) throw bad("min_child_samples and max_bin must be >= 0");
  }

  int leaf_limit() const { return num_leaves.value_or(31); }
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  bool default_left = false;
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaves only
  double gain = 0.0;    // internal nodes only
  double cover = 0.0;   // hessian sum of the training rows reaching the node
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  /// Leaf reached by a row; `missing(j)` reports whether feature j is absent.
  template <typename ValueFn, typename MissingFn>
  const TreeNode& route(ValueFn value, MissingFn missing) const {
    int id = 0;
    while (!nodes[id].is_leaf()) {
      const auto& nd = nodes[id];
      const bool left = missing(nd.feature) ? nd.default_left : value(nd.feature) < nd.threshold;
      id = left ? nd.left : nd.right;
    }
    return nodes[id];
  }

  int depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
  bool operator==(const RegressionTree&) const = default;
};

struct GbtModel {
  GbtParams params;
  double base_score = 0.0;
  double eta = 0.3;
  std::vector<RegressionTree> trees;
  std::vector<std::string> feature_names;
  std::string schema_fingerprint;
  std::vector<double> training_rmse;  // after each boosting round

  /// Prediction using the first `n_trees` trees (all when omitted).
  double predict_row(const DesignMatrix& m, std::size_t i, std::optional<std::size_t> n_trees = std::nullopt) const {
    const auto limit = std::min(n_trees.value_or(trees.size()), trees.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < limit; ++t)
      sum += trees[t].route([&](int j) { return m.at(i, static_cast<std::size_t>(j)); },
                            [&](int j) { return m.is_missing(i, static_cast<std::size_t>(j)); })
                 .weight;
    return base_score + eta * sum;
  }
};

namespace gbt_detail {

inline double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

inline double leaf_score(double g, double h, const GbtParams& p) {
  const double denom = h + p.reg_lambda;
  if (denom <= 0.0) return 0.0;
  const double t = soft_threshold(g, p.reg_alpha);
  return t * t / denom;
}

inline double leaf_weight(double g, double h, const GbtParams& p) {
  const double denom = h + p.reg_lambda;
  if (denom <= 0.0) return 0.0;
  return -soft_threshold(g, p.reg_alpha) / denom;
}

/// Gain of splitting a node with totals (g, h) into (gl, hl) and the rest.
inline double split_gain(double gl, double hl, double g, double h, const GbtParams& p) {
  return 0.5 * (leaf_score(gl, hl, p) + leaf_score(g - gl, h - hl, p) - leaf_score(g, h, p)) - p.gamma;
}

/// Threshold strictly above `lo` and at most `hi`.
inline double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

struct Split {
  double gain = -std::numeric_limits<double>::infinity();
  int feature = -1;
  double threshold = 0.0;
  bool default_left = false;

  bool valid() const { return feature >= 0 && gain > 0.0; }
};

// Column layout shared by every tree of one fit.
struct ColumnIndex {
  std::vector<std::vector<std::uint32_t>> sorted_rows;   // present rows by ascending value
  std::vector<std::vector<std::uint32_t>> missing_rows;
  std::vector<std::vector<std::uint32_t>> rank;          // per feature, per row: distinct-value rank
  std::vector<std::vector<std::uint32_t>> bin_of_rank;   // only filled when binning applies
  std::vector<std::vector<double>> bin_edge;             // threshold below each bin

  ColumnIndex(const DesignMatrix& m, int max_bin) {
    const auto d = m.d();
    sorted_rows.resize(d);
    missing_rows.resize(d);
    rank.assign(d, std::vector<std::uint32_t>(m.n, 0));
    bin_of_rank.resize(d);
    bin_edge.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      auto& rows = sorted_rows[j];
      for (std::uint32_t i = 0; i < m.n; ++i) (m.is_missing(i, j) ? missing_rows[j] : rows).push_back(i);
      std::stable_sort(rows.begin(), rows.end(), [&](auto a, auto b) { return m.at(a, j) < m.at(b, j); });
      std::vector<double> uniq;
      for (auto i : rows) {
        if (uniq.empty() || m.at(i, j) != uniq.back()) uniq.push_back(m.at(i, j));
        rank[j][i] = static_cast<std::uint32_t>(uniq.size() - 1);
      }
      if (max_bin > 0 && uniq.size() > static_cast<std::size_t>(max_bin)) {
        const auto u = uniq.size();
        const auto bins = static_cast<std::size_t>(max_bin);
        bin_of_rank[j].resize(u);
        bin_edge[j].assign(bins, 0.0);
        for (std::size_t b = 1; b < bins; ++b) {
          const auto start = b * u / bins;
          bin_edge[j][b] = midpoint(uniq[start - 1], uniq[start]);
        }
        for (std::size_t r = 0; r < u; ++r) bin_of_rank[j][r] = static_cast<std::uint32_t>(r * bins / u);
        // r * bins / u is the bin whose start index floor(b * u / bins) <= r.
        for (std::size_t r = 0; r < u; ++r) {
          auto b = bin_of_rank[j][r];
          while (b + 1 < bins && (b + 1) * u / bins <= r) ++b;
          while (b > 0 && b * u / bins > r) --b;
          bin_of_rank[j][r] = static_cast<std::uint32_t>(b);
        }
      }
    }
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const DesignMatrix& m, const ColumnIndex& index, const GbtParams& p, const std::vector<double>& grad,
              const std::vector<std::uint8_t>& in_sample, const std::vector<int>& features)
      : m_(m), index_(index), p_(p), grad_(grad), features_(features), row_node_(m.n, -1) {
    for (std::size_t i = 0; i < m.n; ++i)
      if (in_sample[i]) row_node_[i] = 0;
  }

  RegressionTree build() {
    tree_.nodes.assign(1, TreeNode{});
    totals_.assign(1, {});
    for (std::size_t i = 0; i < m_.n; ++i)
      if (row_node_[i] == 0) {
        totals_[0].g += grad_[i];
        totals_[0].h += 1.0;
      }
    tree_.nodes[0].cover = totals_[0].h;

    if (p_.growth == TreeGrowth::depth_wise) {
      std::vector<int> frontier = {0};
      while (!frontier.empty()) {
        std::vector<int> expandable;
        for (int id : frontier)
          if (tree_.nodes[id].depth < p_.max_depth) expandable.push_back(id);
        auto splits = find_splits(expandable);
        std::vector<int> next;
        for (std::size_t k = 0; k < expandable.size(); ++k) {
          if (!splits[k].valid()) continue;
          auto [l, r] = apply(expandable[k], splits[k]);
          next.push_back(l);
          next.push_back(r);
        }
        frontier = std::move(next);
      }
    } else {
      const auto limit = static_cast<std::size_t>(p_.leaf_limit());
      std::map<int, Split> pending;
      auto consider = [&](const std::vector<int>& ids) {
        std::vector<int> allowed;
        for (int id : ids)
          if (p_.max_depth == 0 || tree_.nodes[id].depth < p_.max_depth) allowed.push_back(id);
        auto splits = find_splits(allowed);
        for (std::size_t k = 0; k < allowed.size(); ++k)
          if (splits[k].valid()) pending[allowed[k]] = splits[k];
      };
      consider({0});
      std::size_t leaves = 1;
      while (leaves < limit && !pending.empty()) {
        auto best = pending.begin();
        for (auto it = pending.begin(); it != pending.end(); ++it)
          if (it->second.gain > best->second.gain) best = it;
        const int id = best->first;
        const Split s = best->second;
        pending.erase(best);
        auto [l, r] = apply(id, s);
        ++leaves;
        consider({l, r});
      }
    }

    for (std::size_t id = 0; id < tree_.nodes.size(); ++id) {
      auto& nd = tree_.nodes[id];
      if (nd.is_leaf()) nd.weight = leaf_weight(totals_[id].g, totals_[id].h, p_);
    }
    return std::move(tree_);
  }

 private:
  struct Totals {
    double g = 0.0;
    double h = 0.0;
  };

  std::pair<int, int> apply(int id, const Split& s) {
    const int l = static_cast<int>(tree_.nodes.size());
    const int r = l + 1;
    const int depth = tree_.nodes[id].depth + 1;
    tree_.nodes.push_back(TreeNode{.depth = depth});
    tree_.nodes.push_back(TreeNode{.depth = depth});
    totals_.resize(tree_.nodes.size());
    auto& nd = tree_.nodes[id];
    nd.feature = s.feature;
    nd.threshold = s.threshold;
    nd.default_left = s.default_left;
    nd.left = l;
    nd.right = r;
    nd.gain = s.gain;
    const auto j = static_cast<std::size_t>(s.feature);
    for (std::size_t i = 0; i < m_.n; ++i) {
      if (row_node_[i] != id) continue;
      const bool left = m_.is_missing(i, j) ? s.default_left : m_.at(i, j) < s.threshold;
      row_node_[i] = left ? l : r;
      auto& t = totals_[left ? l : r];
      t.g += grad_[i];
      t.h += 1.0;
    }
    tree_.nodes[l].cover = totals_[l].h;
    tree_.nodes[r].cover = totals_[r].h;
    return {l, r};
  }

  bool child_ok(double h) const {
    return h >= p_.min_child_weight && h >= static_cast<double>(p_.min_child_samples) && h > 0.0;
  }

  // Best split per node. Features are scanned in ascending index order and
  // thresholds in ascending order; a candidate replaces the incumbent only on
  // strictly larger gain, so ties go to the lowest feature, then threshold.
  std::vector<Split> find_splits(const std::vector<int>& nodes) {
    std::vector<Split> best(nodes.size());
    if (nodes.empty()) return best;
    std::vector<int> slot(tree_.nodes.size(), -1);
    for (std::size_t k = 0; k < nodes.size(); ++k) slot[nodes[k]] = static_cast<int>(k);

    struct Scan {
      double g = 0.0, h = 0.0;
      double g_miss = 0.0, h_miss = 0.0;
      std::uint32_t last_rank = 0;
      double last_value = 0.0;
      bool started = false;
    };
    std::vector<Scan> scan(nodes.size());

    for (int f : features_) {
      const auto j = static_cast<std::size_t>(f);
      for (auto& s : scan) s = Scan{};
      for (auto i : index_.missing_rows[j]) {
        const int node = row_node_[i];
        if (node < 0 || slot[node] < 0) continue;
        auto& s = scan[static_cast<std::size_t>(slot[node])];
        s.g_miss += grad_[i];
        s.h_miss += 1.0;
      }
      const auto& ranks = index_.rank[j];
      const bool binned = !index_.bin_of_rank[j].empty();
      for (auto i : index_.sorted_rows[j]) {
        const int node = row_node_[i];
        if (node < 0 || slot[node] < 0) continue;
        const auto k = static_cast<std::size_t>(slot[node]);
        auto& s = scan[k];
        const double v = m_.at(i, j);
        if (s.started && ranks[i] != s.last_rank) {
          bool candidate = true;
          double threshold = 0.0;
          if (binned) {
            const auto b_cur = index_.bin_of_rank[j][ranks[i]];
            candidate = b_cur != index_.bin_of_rank[j][s.last_rank];
            threshold = index_.bin_edge[j][b_cur];
          } else {
            threshold = midpoint(s.last_value, v);
          }
          if (candidate) evaluate(best[k], totals_[nodes[k]], s.g, s.h, s.g_miss, s.h_miss, f, threshold);
        }
        s.g += grad_[i];
        s.h += 1.0;
        s.last_rank = ranks[i];
        s.last_value = v;
        s.started = true;
      }
    }
    return best;
  }

  void evaluate(Split& best, const Totals& node, double g_acc, double h_acc, double g_miss, double h_miss, int feature,
                double threshold) const {
    auto consider = [&](double gl, double hl, bool default_left) {
      const double hr = node.h - hl;
      if (!child_ok(hl) || !child_ok(hr)) return;
      const double gain = split_gain(gl, hl, node.g, node.h, p_);
      if (gain > best.gain) best = Split{gain, feature, threshold, default_left};
    };
    if (h_miss > 0.0) {
      consider(g_acc + g_miss, h_acc + h_miss, true);
      consider(g_acc, h_acc, false);
    } else {
      // No missing rows reach this node: unseen missing values follow the larger child.
      consider(g_acc, h_acc, h_acc >= node.h - h_acc);
    }
  }

  const DesignMatrix& m_;
  const ColumnIndex& index_;
  const GbtParams& p_;
  const std::vector<double>& grad_;
  const std::vector<int>& features_;
  std::vector<int> row_node_;
  RegressionTree tree_;
  std::vector<Totals> totals_;
};

inline double rmse_of(const std::vector<double>& pred, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

}  // namespace gbt_detail

/// Fits a squared-error boosted ensemble. The base score is the target mean;
/// each round fits one tree to g_i = prediction_i - y_i with unit hessians.
inline GbtModel gbt_fit(const DesignMatrix& m, const GbtParams& params) {
  params.validate();
  if (m.n == 0) throw Error(ErrorCode::empty_training_set, "cannot fit boosted trees on zero rows");
  for (double y : m.targets)
    if (!std::isfinite(y)) throw Error(ErrorCode::invalid_argument, "non-finite target");

  GbtModel model;
  model.params = params;
  model.eta = params.eta;
  model.feature_names = m.schema.names();
  model.schema_fingerprint = m.schema.fingerprint();
  model.base_score = std::accumulate(m.targets.begin(), m.targets.end(), 0.0) / static_cast<double>(m.n);

  const gbt_detail::ColumnIndex index(m, params.max_bin);
  std::vector<double> pred(m.n, model.base_score);
  std::vector<double> grad(m.n);
  std::vector<std::uint8_t> in_sample(m.n, 1);
  std::vector<int> all_features(m.d());
  std::iota(all_features.begin(), all_features.end(), 0);
  Rng rng(params.seed);

  for (int round = 0; round < params.n_estimators; ++round) {
    for (std::size_t i = 0; i < m.n; ++i) grad[i] = pred[i] - m.targets[i];

    if (params.subsample < 1.0) {
      bool any = false;
      for (std::size_t i = 0; i < m.n; ++i) {
        in_sample[i] = rng.uniform() < params.subsample ? 1 : 0;
        any = any || in_sample[i];
      }
      if (!any) in_sample[rng.below(m.n)] = 1;
    }

    std::vector<int> features = all_features;
    if (params.colsample_bytree < 1.0 && !features.empty()) {
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(params.colsample_bytree * static_cast<double>(features.size()))));
      rng.shuffle(std::span<int>(features));
      features.resize(std::min(keep, features.size()));
      std::sort(features.begin(), features.end());
    }

    gbt_detail::TreeBuilder builder(m, index, params, grad, in_sample, features);
    model.trees.push_back(builder.build());
    const auto& tree = model.trees.back();
    for (std::size_t i = 0; i < m.n; ++i)
      pred[i] += params.eta * tree.route([&](int j) { return m.at(i, static_cast<std::size_t>(j)); },
                                         [&](int j) { return m.is_missing(i, static_cast<std::size_t>(j)); })
                                  .weight;
    model.training_rmse.push_back(gbt_detail::rmse_of(pred, m.targets));
  }
  return model;
}

inline std::vector<double> gbt_predict(const GbtModel& model, const DesignMatrix& m) {
  if (m.schema.fingerprint() != model.schema_fingerprint)
    throw Error(ErrorCode::schema_mismatch, "matrix schema " + m.schema.fingerprint() + " does not match model schema " +
                                                model.schema_fingerprint);
  std::vector<double> out(m.n);
  for (std::size_t i = 0; i < m.n; ++i) out[i] = model.predict_row(m, i);
  return out;
}

/// Total split gain per feature, normalized to sum to one. Features that never
/// split are omitted.
inline std::map<std::string, double> gbt_importance(const GbtModel& model) {
  std::vector<double> total(model.feature_names.size(), 0.0);
  bool any = false;
  for (const auto& tree : model.trees)
    for (const auto& nd : tree.nodes)
      if (!nd.is_leaf()) {
        total[static_cast<std::size_t>(nd.feature)] += nd.gain;
        any = true;
      }
  if (!any) throw Error(ErrorCode::no_splits, "model has no internal nodes");
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < total.size(); ++j)
    if (total[j] > 0.0) out[model.feature_names[j]] = total[j] / sum;
  return out;
}

}  // namespace proxylm
