#pragma once

// Bagged CART regression forest with variance-reduction splits and impurity importances.
//
// Reproducibility rules:
//  * rows are put into a canonical (lexicographic) order before fitting, so the model
//    depends on the multiset of training rows and not on their input order;
//  * tree k draws all of its randomness from derive_seed(master_seed, k);
//  * thresholds are midpoints between adjacent distinct values; among equal gains the
//    lowest feature index and then the lowest threshold wins.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "exocast/error.hpp"
#include "exocast/rng.hpp"

namespace exocast {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;     // unlimited when empty
  std::size_t min_samples_leaf = 1;
  std::optional<std::size_t> max_features;  // ceil(p/3) when empty
  bool bootstrap = true;
  std::uint64_t master_seed = 0;
  std::size_t n_threads = 1;

  void validate() const {
    if (n_trees < 1) fail(Errc::InvalidArgument, "n_trees must be >= 1");
    if (min_samples_leaf < 1) fail(Errc::InvalidArgument, "min_samples_leaf must be >= 1");
    if (max_features && *max_features < 1) fail(Errc::InvalidArgument, "max_features must be >= 1");
  }

  [[nodiscard]] std::size_t features_per_split(std::size_t p) const {
    const std::size_t k = max_features ? *max_features : (p + 2) / 3;
    return std::clamp<std::size_t>(k, 1, p);
  }
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double prediction = 0.0;      // mean target of the samples reaching the node
  std::size_t sample_count = 0;
  double impurity_decrease = 0.0;  // n_node * (Var(parent) - weighted child variance)

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t n_features = 0;

  [[nodiscard]] const TreeNode& leaf_for(std::span<const double> x) const {
    const TreeNode* node = &nodes.front();
    while (!node->is_leaf())
      node = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(node->feature)] <= node->threshold
                                                 ? node->left
                                                 : node->right)];
    return *node;
  }

  [[nodiscard]] double predict(std::span<const double> x) const {
    if (x.size() != n_features)
      fail(Errc::DimensionMismatch, "expected " + std::to_string(n_features) + " features, got " +
                                        std::to_string(x.size()));
    return leaf_for(x).prediction;
  }

  [[nodiscard]] std::size_t split_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](auto& n) { return !n.is_leaf(); }));
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct ForestModel {
  ForestConfig config;
  std::size_t n_features = 0;
  std::vector<RegressionTree> trees;
};

namespace detail {

inline void check_dataset(const Eigen::MatrixXd& X, std::span<const double> y) {
  if (X.rows() == 0 || y.empty()) fail(Errc::EmptyDataset, "no training rows");
  if (static_cast<std::size_t>(X.rows()) != y.size())
    fail(Errc::DimensionMismatch, std::to_string(X.rows()) + " feature rows vs " + std::to_string(y.size()) +
                                      " targets");
  if (X.cols() == 0) fail(Errc::DimensionMismatch, "no feature columns");
  if (!X.allFinite()) fail(Errc::NonFiniteInput, "non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) fail(Errc::NonFiniteInput, "non-finite target value");
}

/// Rows of (X, y) in lexicographic order of (x_0, ..., x_{p-1}, y).
struct CanonicalData {
  Eigen::MatrixXd X;
  std::vector<double> y;
};

inline CanonicalData canonicalize(const Eigen::MatrixXd& X, std::span<const double> y) {
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double xa = X(static_cast<Eigen::Index>(a), j), xb = X(static_cast<Eigen::Index>(b), j);
      if (xa != xb) return xa < xb;
    }
    return y[a] < y[b];
  });
  CanonicalData c;
  c.X.resize(X.rows(), X.cols());
  c.y.resize(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    c.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(order[i]));
    c.y[i] = y[order[i]];
  }
  return c;
}

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;  // SSE(parent) - SSE(left) - SSE(right)
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, std::span<const double> y, const ForestConfig& config, Rng rng)
      : X_(X), y_(y), config_(config), rng_(rng) {
    mtry_ = config.features_per_split(static_cast<std::size_t>(X.cols()));
  }

  RegressionTree build(std::vector<std::size_t> samples) {
    std::sort(samples.begin(), samples.end());
    tree_.n_features = static_cast<std::size_t>(X_.cols());
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  int grow(const std::vector<std::size_t>& samples, std::size_t depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const double n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (auto i : samples) sum += y_[i];
    const double mean = sum / n;
    double sse = 0.0;
    bool pure = true;
    for (auto i : samples) {
      const double d = y_[i] - mean;
      sse += d * d;
      pure = pure && y_[i] == y_[samples.front()];
    }
    {
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.prediction = mean;
      node.sample_count = samples.size();
    }
    const bool depth_done = config_.max_depth && depth >= *config_.max_depth;
    if (pure || depth_done || samples.size() < 2 * config_.min_samples_leaf) return id;

    const auto best = best_split(samples, mean, sse);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : samples)
      (X_(static_cast<Eigen::Index>(i), best.feature) <= best.threshold ? left : right).push_back(i);
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    node.impurity_decrease = best.gain;
    return id;
  }

  std::vector<std::size_t> candidate_features() {
    const std::size_t p = static_cast<std::size_t>(X_.cols());
    std::vector<std::size_t> all(p);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (mtry_ < p) {
      for (std::size_t k = 0; k < mtry_; ++k) std::swap(all[k], all[k + rng_.below(p - k)]);
      all.resize(mtry_);
      std::sort(all.begin(), all.end());
    }
    return all;
  }

  SplitCandidate best_split(const std::vector<std::size_t>& samples, double mean, double sse) {
    SplitCandidate best;
    const double tol = 1e-12 * sse;
    const std::size_t n = samples.size();
    const std::size_t min_leaf = config_.min_samples_leaf;
    std::vector<std::pair<double, double>> sorted(n);  // (x, centered y)
    for (std::size_t f : candidate_features()) {
      for (std::size_t k = 0; k < n; ++k)
        sorted[k] = {X_(static_cast<Eigen::Index>(samples[k]), static_cast<Eigen::Index>(f)), y_[samples[k]] - mean};
      std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.first < b.first; });
      double total = 0.0, total_sq = 0.0;
      for (auto& [x, d] : sorted) {
        total += d;
        total_sq += d * d;
      }
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += sorted[k].second;
        left_sq += sorted[k].second * sorted[k].second;
        if (!(sorted[k].first < sorted[k + 1].first)) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double sse_l = left_sq - left_sum * left_sum / static_cast<double>(nl);
        const double right_sum = total - left_sum;
        const double sse_r = (total_sq - left_sq) - right_sum * right_sum / static_cast<double>(nr);
        const double gain = sse - sse_l - sse_r;
        if (gain > best.gain + tol && gain > tol) {
          double mid = 0.5 * (sorted[k].first + sorted[k + 1].first);
          if (!(mid < sorted[k + 1].first)) mid = sorted[k].first;
          best = {static_cast<int>(f), mid, gain};
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& X_;
  std::span<const double> y_;
  const ForestConfig& config_;
  Rng rng_;
  std::size_t mtry_ = 1;
  RegressionTree tree_;
};

}  // namespace detail

/// Greedy CART regression tree on all rows (no bootstrap).
inline RegressionTree fit_tree(const Eigen::MatrixXd& X, std::span<const double> y, const ForestConfig& config,
                               std::uint64_t rng_seed) {
  config.validate();
  detail::check_dataset(X, y);
  const auto data = detail::canonicalize(X, y);
  std::vector<std::size_t> all(data.y.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return detail::TreeBuilder(data.X, data.y, config, Rng(rng_seed)).build(std::move(all));
}

/// Tree k is grown from derive_seed(config.master_seed, k); with bootstrap it first draws
/// n rows with replacement from the same stream.
inline ForestModel fit_forest(const Eigen::MatrixXd& X, std::span<const double> y, const ForestConfig& config) {
  config.validate();
  detail::check_dataset(X, y);
  const auto data = detail::canonicalize(X, y);
  ForestModel model;
  model.config = config;
  model.n_features = static_cast<std::size_t>(X.cols());
  model.trees.resize(config.n_trees);

  auto fit_one = [&](std::size_t k) {
    Rng rng(derive_seed(config.master_seed, k));
    const std::size_t n = data.y.size();
    std::vector<std::size_t> samples(n);
    if (config.bootstrap) {
      for (auto& s : samples) s = static_cast<std::size_t>(rng.below(n));
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    model.trees[k] = detail::TreeBuilder(data.X, data.y, config, rng).build(std::move(samples));
  };

  const std::size_t threads = std::clamp<std::size_t>(config.n_threads, 1, config.n_trees);
  if (threads == 1) {
    for (std::size_t k = 0; k < config.n_trees; ++k) fit_one(k);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t)
      workers.emplace_back([&, t] {
        for (std::size_t k = t; k < config.n_trees; k += threads) fit_one(k);
      });
  }
  return model;
}

inline double forest_predict(const ForestModel& model, std::span<const double> x) {
  if (x.size() != model.n_features)
    fail(Errc::DimensionMismatch, "expected " + std::to_string(model.n_features) + " features, got " +
                                      std::to_string(x.size()));
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.leaf_for(x).prediction;
  return sum / static_cast<double>(model.trees.size());
}

struct ImportanceReport {
  std::vector<double> importances;  // indexed by feature, sums to 1
  std::vector<std::size_t> ranking;  // feature indices, most important first
};

/// Total impurity decrease per feature summed over every tree, normalized to sum 1.
inline ImportanceReport feature_importance(const ForestModel& model) {
  ImportanceReport report;
  report.importances.assign(model.n_features, 0.0);
  for (const auto& tree : model.trees)
    for (const auto& node : tree.nodes)
      if (!node.is_leaf()) report.importances[static_cast<std::size_t>(node.feature)] += node.impurity_decrease;
  const double total = std::accumulate(report.importances.begin(), report.importances.end(), 0.0);
  if (!(total > 0.0)) fail(Errc::NoSplits, "forest contains no splits; importances are all zero");
  for (auto& v : report.importances) v /= total;
  report.ranking.resize(model.n_features);
  std::iota(report.ranking.begin(), report.ranking.end(), std::size_t{0});
  std::stable_sort(report.ranking.begin(), report.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return report.importances[a] > report.importances[b]; });
  return report;
}

struct RegressionMetrics {
  double mae = 0.0;
  std::optional<double> mape_accuracy;  // percent; empty when some actual is zero
};

/// MAE and accuracy = 100 - 100 * MAPE.
inline RegressionMetrics evaluate_regression(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size() || predictions.empty())
    fail(Errc::LengthMismatch, "need equal nonzero lengths, got " + std::to_string(predictions.size()) + " and " +
                                   std::to_string(actuals.size()));
  RegressionMetrics m;
  double abs_sum = 0.0, pct_sum = 0.0;
  bool zero_actual = false;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double err = std::abs(actuals[i] - predictions[i]);
    abs_sum += err;
    if (actuals[i] == 0.0)
      zero_actual = true;
    else
      pct_sum += err / std::abs(actuals[i]);
  }
  const double n = static_cast<double>(actuals.size());
  m.mae = abs_sum / n;
  if (!zero_actual) m.mape_accuracy = 100.0 - 100.0 * (pct_sum / n);
  return m;
}

inline nlohmann::json to_json(const ForestModel& model) {
  nlohmann::json j;
  j["format"] = "exocast.forest";
  j["version"] = 1;
  j["n_features"] = model.n_features;
  auto& c = j["config"];
  c["n_trees"] = model.config.n_trees;
  c["max_depth"] = model.config.max_depth ? nlohmann::json(*model.config.max_depth) : nlohmann::json(nullptr);
  c["min_samples_leaf"] = model.config.min_samples_leaf;
  c["max_features"] =
      model.config.max_features ? nlohmann::json(*model.config.max_features) : nlohmann::json(nullptr);
  c["bootstrap"] = model.config.bootstrap;
  c["master_seed"] = model.config.master_seed;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : model.trees) {
    nlohmann::json jt;
    for (const auto& n : t.nodes) {
      jt["feature"].push_back(n.feature);
      jt["threshold"].push_back(n.threshold);
      jt["left"].push_back(n.left);
      jt["right"].push_back(n.right);
      jt["prediction"].push_back(n.prediction);
      jt["count"].push_back(n.sample_count);
      jt["decrease"].push_back(n.impurity_decrease);
    }
    trees.push_back(std::move(jt));
  }
  return j;
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "exocast.forest" || j.value("version", 0) != 1)
    fail(Errc::InvalidArgument, "not a version-1 forest document");
  ForestModel m;
  m.n_features = j.at("n_features").get<std::size_t>();
  const auto& c = j.at("config");
  m.config.n_trees = c.at("n_trees").get<std::size_t>();
  if (!c.at("max_depth").is_null()) m.config.max_depth = c.at("max_depth").get<std::size_t>();
  m.config.min_samples_leaf = c.at("min_samples_leaf").get<std::size_t>();
  if (!c.at("max_features").is_null()) m.config.max_features = c.at("max_features").get<std::size_t>();
  m.config.bootstrap = c.at("bootstrap").get<bool>();
  m.config.master_seed = c.at("master_seed").get<std::uint64_t>();
  for (const auto& jt : j.at("trees")) {
    RegressionTree t;
    t.n_features = m.n_features;
    const auto& f = jt.at("feature");
    for (std::size_t i = 0; i < f.size(); ++i) {
      TreeNode n;
      n.feature = f[i].get<int>();
      n.threshold = jt.at("threshold")[i].get<double>();
      n.left = jt.at("left")[i].get<int>();
      n.right = jt.at("right")[i].get<int>();
      n.prediction = jt.at("prediction")[i].get<double>();
      n.sample_count = jt.at("count")[i].get<std::size_t>();
      n.impurity_decrease = jt.at("decrease")[i].get<double>();
      t.nodes.push_back(n);
    }
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace exocast
