#include <gtest/gtest.h>

#include <numeric>

#include "exocast/forest.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using namespace exocast;

struct Dataset {
  Eigen::MatrixXd X;
  std::vector<double> y;
};

Dataset linear_with_noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d{Eigen::MatrixXd(static_cast<Eigen::Index>(n), 2), {}};
  for (std::size_t i = 0; i < n; ++i) {
    d.X(static_cast<Eigen::Index>(i), 0) = rng.normal();
    d.X(static_cast<Eigen::Index>(i), 1) = rng.normal();
    d.y.push_back(3.0 * d.X(static_cast<Eigen::Index>(i), 0));
  }
  return d;
}

Dataset small_random(Rng& rng) {
  const auto n = static_cast<Eigen::Index>(2 + rng.below(7));
  const auto p = static_cast<Eigen::Index>(1 + rng.below(3));
  const bool coarse = rng.below(2) == 0;  // small integers force duplicate values
  Dataset d{Eigen::MatrixXd(n, p), {}};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) d.X(i, j) = coarse ? static_cast<double>(rng.below(4)) : rng.normal();
    d.y.push_back(coarse ? static_cast<double>(rng.below(5)) : rng.normal());
  }
  return d;
}

ForestConfig all_features(std::size_t p) {
  ForestConfig c;
  c.max_features = p;
  return c;
}

// Walks the node array directly rather than calling RegressionTree::predict.
double walk(const RegressionTree& t, const std::vector<double>& x) {
  std::size_t at = 0;
  while (t.nodes[at].feature >= 0)
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(t.nodes[at].feature)] <= t.nodes[at].threshold
                                      ? t.nodes[at].left
                                      : t.nodes[at].right);
  return t.nodes[at].prediction;
}

std::vector<double> row(const Eigen::MatrixXd& X, Eigen::Index i) {
  std::vector<double> r;
  for (Eigen::Index j = 0; j < X.cols(); ++j) r.push_back(X(i, j));
  return r;
}

TEST(Tree, ConstantTargetIsSingleLeaf) {
  Eigen::MatrixXd X(4, 1);
  X << 1, 2, 3, 4;
  const auto t = fit_tree(X, std::vector{5.0, 5.0, 5.0, 5.0}, {}, 1);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].prediction, 5.0);
}

TEST(Tree, DepthOneSplitOnIdentity) {
  Eigen::MatrixXd X(4, 1);
  X << 1, 2, 3, 4;
  ForestConfig c;
  c.max_depth = 1;
  const auto t = fit_tree(X, std::vector{1.0, 2.0, 3.0, 4.0}, c, 1);
  ASSERT_EQ(t.split_count(), 1u);
  EXPECT_EQ(t.nodes[0].threshold, 2.5);
  EXPECT_EQ(t.predict(std::vector{1.0}), 1.5);
  EXPECT_EQ(t.predict(std::vector{4.0}), 3.5);
}

TEST(Tree, Errors) {
  EXPECT_ERRC(Errc::EmptyDataset, fit_tree(Eigen::MatrixXd(0, 1), std::vector<double>{}, {}, 1));
  EXPECT_ERRC(Errc::DimensionMismatch, fit_tree(Eigen::MatrixXd::Zero(3, 1), std::vector{1.0, 2.0}, {}, 1));
  const auto t = fit_tree(Eigen::MatrixXd::Identity(2, 2), std::vector{1.0, 2.0}, {}, 1);
  EXPECT_ERRC(Errc::DimensionMismatch, t.predict(std::vector{1.0}));
}

TEST(Tree, RootSplitMatchesBruteForce) {
  Rng rng(404);
  int splits = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = small_random(rng);
    const auto tree = fit_tree(d.X, d.y, all_features(static_cast<std::size_t>(d.X.cols())), 1);
    const auto want = oracle::best_root_split(d.X, d.y);
    if (!want) {
      EXPECT_TRUE(tree.nodes[0].is_leaf()) << trial;
      continue;
    }
    ++splits;
    ASSERT_FALSE(tree.nodes[0].is_leaf()) << trial;
    EXPECT_EQ(tree.nodes[0].feature, want->feature) << trial;
    EXPECT_EQ(tree.nodes[0].threshold, want->threshold) << trial;
  }
  EXPECT_GT(splits, 100);
}

TEST(Tree, FullyGrownInterpolatesTrainingData) {
  const auto d = linear_with_noise(60, 5);
  const auto t = fit_tree(d.X, d.y, all_features(2), 1);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) EXPECT_EQ(t.predict(row(d.X, i)), d.y[static_cast<std::size_t>(i)]);
}

TEST(Tree, MinSamplesLeafRespected) {
  const auto d = linear_with_noise(50, 6);
  ForestConfig c = all_features(2);
  c.min_samples_leaf = 7;
  const auto t = fit_tree(d.X, d.y, c, 1);
  for (const auto& n : t.nodes)
    if (n.is_leaf()) {
      EXPECT_GE(n.sample_count, 7u);
    }
}

TEST(Forest, SingleTreeWithoutBootstrapEqualsFitTree) {
  const auto d = linear_with_noise(40, 7);
  ForestConfig c;
  c.n_trees = 1;
  c.bootstrap = false;
  c.master_seed = 99;
  const auto forest = fit_forest(d.X, d.y, c);
  EXPECT_EQ(forest.trees[0], fit_tree(d.X, d.y, c, derive_seed(99, 0)));
}

TEST(Forest, DeterministicAcrossRunsAndThreads) {
  const auto d = linear_with_noise(80, 8);
  ForestConfig c;
  c.n_trees = 20;
  c.master_seed = 5;
  const auto a = fit_forest(d.X, d.y, c);
  const auto b = fit_forest(d.X, d.y, c);
  c.n_threads = 4;
  const auto threaded = fit_forest(d.X, d.y, c);
  EXPECT_EQ(a.trees, b.trees);
  EXPECT_EQ(a.trees, threaded.trees);
}

TEST(Forest, RowOrderDoesNotMatter) {
  const auto d = linear_with_noise(50, 9);
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(1);
  for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
  Dataset shuffled{Eigen::MatrixXd(50, 2), {}};
  for (std::size_t i = 0; i < 50; ++i) {
    shuffled.X.row(static_cast<Eigen::Index>(i)) = d.X.row(static_cast<Eigen::Index>(perm[i]));
    shuffled.y.push_back(d.y[perm[i]]);
  }
  ForestConfig c;
  c.n_trees = 10;
  EXPECT_EQ(fit_forest(d.X, d.y, c).trees, fit_forest(shuffled.X, shuffled.y, c).trees);
}

TEST(Forest, ConstantTargetPredictsConstantAndHasNoSplits) {
  Rng rng(3);
  Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(30, 3, [&] { return rng.normal(); });
  const std::vector<double> y(30, 2.5);
  ForestConfig c;
  c.n_trees = 5;
  const auto m = fit_forest(X, y, c);
  EXPECT_EQ(forest_predict(m, std::vector{0.1, 0.2, 0.3}), 2.5);
  EXPECT_ERRC(Errc::NoSplits, feature_importance(m));
}

TEST(Forest, PredictionIsMeanOfTrees) {
  const auto d = linear_with_noise(30, 10);
  ForestConfig c;
  c.n_trees = 2;
  c.master_seed = 17;
  const auto m = fit_forest(d.X, d.y, c);
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const std::vector<double> x = {rng.normal(), rng.normal()};
    EXPECT_DOUBLE_EQ(forest_predict(m, x), (walk(m.trees[0], x) + walk(m.trees[1], x)) / 2.0);
  }
  auto reversed = m;
  std::reverse(reversed.trees.begin(), reversed.trees.end());
  EXPECT_EQ(forest_predict(reversed, std::vector{0.3, -0.2}), forest_predict(m, std::vector{0.3, -0.2}));
  EXPECT_ERRC(Errc::DimensionMismatch, forest_predict(m, std::vector{1.0}));
}

TEST(Forest, MonotoneFeatureScalingKeepsPredictions) {
  const auto d = linear_with_noise(40, 11);
  Eigen::MatrixXd scaled = d.X;
  scaled.col(1) = scaled.col(1).array().exp();
  ForestConfig c;
  c.n_trees = 8;
  c.bootstrap = false;
  const auto a = fit_forest(d.X, d.y, c), b = fit_forest(scaled, d.y, c);
  // Thresholds are midpoints, so only points every tree trained on are guaranteed to route alike.
  for (Eigen::Index i = 0; i < d.X.rows(); ++i)
    EXPECT_EQ(forest_predict(a, row(d.X, i)), forest_predict(b, row(scaled, i)));
}

// Every split sees both features. With the default ceil(2/3) = 1 candidate, half the
// splits are forced onto the noise column and x0 lands near 0.87 instead.
TEST(Importance, DominantFeatureAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = linear_with_noise(200, 100 + seed);
    ForestConfig c = all_features(2);
    c.n_trees = 50;
    c.master_seed = seed;
    const auto imp = feature_importance(fit_forest(d.X, d.y, c));
    EXPECT_GT(imp.importances[0], 0.9) << seed;
    EXPECT_NEAR(imp.importances[0] + imp.importances[1], 1.0, 1e-10);
    EXPECT_EQ(imp.ranking[0], 0u);
  }
}

TEST(Importance, DefaultSubsamplingStillRanksSignalFirst) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = linear_with_noise(200, 100 + seed);
    ForestConfig c;
    c.n_trees = 50;
    c.master_seed = seed;
    const auto imp = feature_importance(fit_forest(d.X, d.y, c));
    EXPECT_EQ(imp.ranking[0], 0u);
    EXPECT_GT(imp.importances[0], 0.75) << seed;
  }
}

TEST(Importance, UnusedFeatureIsExactlyZero) {
  auto d = linear_with_noise(60, 12);
  d.X.col(1).setConstant(4.0);
  ForestConfig c;
  c.n_trees = 10;
  const auto imp = feature_importance(fit_forest(d.X, d.y, c));
  EXPECT_EQ(imp.importances[1], 0.0);
  EXPECT_EQ(imp.importances[0], 1.0);
}

TEST(Regression, MetricExamples) {
  auto m = evaluate_regression(std::vector{1.0, 2.0}, std::vector{1.0, 2.0});
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(*m.mape_accuracy, 100.0);
  m = evaluate_regression(std::vector{101.0, 99.0}, std::vector{100.0, 100.0});
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_DOUBLE_EQ(*m.mape_accuracy, 99.0);
  m = evaluate_regression(std::vector{1.0, 2.0}, std::vector{0.0, 2.0});
  EXPECT_DOUBLE_EQ(m.mae, 0.5);
  EXPECT_FALSE(m.mape_accuracy.has_value());
  EXPECT_ERRC(Errc::LengthMismatch, evaluate_regression(std::vector{1.0}, std::vector{1.0, 2.0}));
}

TEST(Regression, AccuracyIsOneHundredMinusMape) {
  Rng rng(21);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> actual, pred;
    double mape = 0;
    for (int i = 0; i < 30; ++i) {
      actual.push_back(7300 * std::exp(0.2 * rng.normal()));
      pred.push_back(actual.back() + 37.17 * rng.normal());
      mape += std::abs(actual.back() - pred.back()) / actual.back();
    }
    mape /= 30;
    EXPECT_NEAR(*evaluate_regression(pred, actual).mape_accuracy, 100 - 100 * mape, 1e-10);
  }
  // A constant 37.17 error on a constant 7288 price gives 99.49 % accuracy.
  const double price = 37.17 / 0.0051;
  const auto m = evaluate_regression(std::vector{price + 37.17}, std::vector{price});
  EXPECT_NEAR(m.mae, 37.17, 1e-9);
  EXPECT_NEAR(*m.mape_accuracy, 99.49, 1e-9);
}

TEST(ForestJson, RoundTripIsBitExact) {
  const auto d = linear_with_noise(40, 13);
  ForestConfig c;
  c.n_trees = 4;
  c.max_depth = 5;
  c.master_seed = 77;
  const auto m = fit_forest(d.X, d.y, c);
  const auto back = forest_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.trees, m.trees);
  EXPECT_EQ(back.config.master_seed, 77u);
  EXPECT_EQ(back.config.max_depth, std::optional<std::size_t>(5));
}

}  // namespace
