#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "sleepeff/errors.hpp"
#include "sleepeff/forest.hpp"

using namespace sleepeff;
using namespace sleepeff::forest;

namespace {

TrainingSet random_set(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(n * p), y(n);
  for (auto& v : x) v = z(rng);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(x[i * p]) + 0.5 * x[i * p + 1] + 0.1 * z(rng);
  return TrainingSet(std::move(x), std::move(y), p);
}

ForestConfig exhaustive(std::size_t p) {
  ForestConfig c;
  c.mtry = p;
  c.bootstrap = false;
  c.n_trees = 1;
  return c;
}

dataset::FeatureSchema schema_of(std::size_t p) {
  std::vector<dataset::FeatureDescriptor> f;
  for (std::size_t j = 0; j < p; ++j)
    f.push_back({"f" + std::to_string(j), dataset::Source::wearable_activity, dataset::Kind::numeric, {}});
  return dataset::FeatureSchema(std::move(f));
}

double sse(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

struct BestSplit {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Enumerates every midpoint of every feature and scores it directly.
BestSplit brute_force_root(const TrainingSet& s, std::size_t min_leaf) {
  std::vector<double> all(s.targets().begin(), s.targets().end());
  const double parent = sse(all);
  BestSplit best;
  for (std::size_t j = 0; j < s.n_features(); ++j) {
    std::set<double> values;
    for (std::size_t i = 0; i < s.size(); ++i) values.insert(s.x(i, j));
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      const double t = (*it + *std::next(it)) / 2.0;
      std::vector<double> left, right;
      for (std::size_t i = 0; i < s.size(); ++i) (s.x(i, j) < t ? left : right).push_back(s.y(i));
      if (left.size() < min_leaf || right.size() < min_leaf) continue;
      const double gain = parent - sse(left) - sse(right);
      if (gain > best.gain + 1e-12) best = {static_cast<int>(j), t, gain};
    }
  }
  return best;
}

}  // namespace

TEST(FitTree, ConstantTargetsGiveSingleLeaf) {
  const TrainingSet s({1, 2, 3, 4}, {0.5, 0.5, 0.5, 0.5}, 1);
  const auto t = fit_tree(s, exhaustive(1), 1);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].value, 0.5);
}

TEST(FitTree, FourPointStepSplitsAtMidpoint) {
  const TrainingSet s({1, 2, 3, 4}, {0, 0, 1, 1}, 1);
  const auto t = fit_tree(s, exhaustive(1), 1);
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.nodes[0].feature, 0);
  EXPECT_EQ(t.nodes[0].threshold, 2.5);
  EXPECT_EQ(t.nodes[1].value, 0.0);
  EXPECT_EQ(t.nodes[t.nodes[0].right].value, 1.0);
  EXPECT_DOUBLE_EQ(t.nodes[0].gain, 1.0);  // 4 * 0.25 - 0
  EXPECT_EQ(t.predict(std::vector<double>{2.4}), 0.0);
  EXPECT_EQ(t.predict(std::vector<double>{2.5}), 1.0);
}

TEST(FitTree, MinSamplesLeafBlocksSplit) {
  const TrainingSet s({1, 2, 3, 4}, {0, 0, 1, 1}, 1);
  auto c = exhaustive(1);
  c.min_samples_leaf = 4;
  const auto t = fit_tree(s, c, 1);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].value, 0.5);
}

TEST(FitTree, RootSplitMatchesExhaustiveEnumeration) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = random_set(40, 4, seed);
    for (std::size_t leaf : {1, 5}) {
      auto c = exhaustive(4);
      c.min_samples_leaf = leaf;
      const auto t = fit_tree(s, c, seed);
      const auto want = brute_force_root(s, leaf);
      ASSERT_EQ(t.nodes[0].feature, want.feature) << seed;
      EXPECT_DOUBLE_EQ(t.nodes[0].threshold, want.threshold);  // same midpoint up to rounding
      EXPECT_NEAR(t.nodes[0].gain, want.gain, 1e-9);
    }
  }
}

TEST(FitTree, NodeInvariants) {
  const auto s = random_set(120, 5, 3);
  auto c = exhaustive(5);
  c.min_samples_leaf = 3;
  const auto t = fit_tree(s, c, 2);
  // Recount every node's samples and mean by routing the training rows.
  std::vector<std::vector<double>> reached(t.nodes.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t n = 0;
    while (true) {
      reached[n].push_back(s.y(i));
      if (t.nodes[n].is_leaf()) break;
      n = s.x(i, t.nodes[n].feature) < t.nodes[n].threshold ? n + 1 : t.nodes[n].right;
    }
  }
  for (std::size_t n = 0; n < t.nodes.size(); ++n) {
    const auto& node = t.nodes[n];
    ASSERT_EQ(reached[n].size(), node.n_samples);
    const double mean = std::accumulate(reached[n].begin(), reached[n].end(), 0.0) / node.n_samples;
    EXPECT_NEAR(node.value, mean, 1e-12);
    EXPECT_NEAR(node.impurity, sse(reached[n]) / node.n_samples, 1e-12);
    if (node.is_leaf()) EXPECT_GE(node.n_samples, 3u);
    else EXPECT_GT(node.gain, 0.0);
  }
}

TEST(FitTree, MaxDepthRespected) {
  const auto s = random_set(200, 3, 4);
  auto c = exhaustive(3);
  c.max_depth = 3;
  EXPECT_LE(fit_tree(s, c, 1).depth(), 3u);
  c.max_depth = 0;
  EXPECT_EQ(fit_tree(s, c, 1).nodes.size(), 1u);
}

TEST(FitTree, SingleTreeInterpolatesDistinctRows) {
  const auto s = random_set(150, 3, 5);
  const auto t = fit_tree(s, exhaustive(3), 1);
  for (std::size_t i = 0; i < s.size(); ++i) ASSERT_EQ(t.predict(s.row(i)), s.y(i));
}

TEST(FitTree, MonotoneTransformKeepsPartition) {
  const auto s = random_set(100, 3, 6);
  std::vector<double> x;
  std::vector<double> y(s.targets().begin(), s.targets().end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    x.push_back(std::exp(s.x(i, 0)));
    x.push_back(s.x(i, 1));
    x.push_back(s.x(i, 2) * 3 + 1);
  }
  const TrainingSet u(std::move(x), std::move(y), 3);
  for (std::size_t mtry : {1, 3}) {
    auto c = exhaustive(3);
    c.mtry = mtry;
    c.min_samples_leaf = 2;
    const auto a = fit_tree(s, c, 9);
    const auto b = fit_tree(u, c, 9);
    ASSERT_EQ(a.nodes.size(), b.nodes.size());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(a.leaf_of(s.row(i)), b.leaf_of(u.row(i)));
  }
}

TEST(FitTree, EmptyInputThrows) {
  const TrainingSet s({}, {}, 2);
  EXPECT_THROW(fit_tree(s, exhaustive(2), 1), EmptyInput);
}

TEST(FitForest, SingleTreeWithoutBootstrapEqualsFitTree) {
  const auto s = random_set(80, 6, 7);
  ForestConfig c;
  c.n_trees = 1;
  c.bootstrap = false;
  c.seed = 12;
  const auto f = fit_forest(s, c);
  ASSERT_EQ(f.trees.size(), 1u);
  EXPECT_EQ(f.trees[0], fit_tree(s, c, tree_seed(12, 0)));
}

TEST(FitForest, DeterministicAcrossThreadCounts) {
  const auto s = random_set(300, 9, 8);
  ForestConfig c;
  c.seed = 5;
  c.threads = 1;
  const auto serial = fit_forest(s, c);
  for (std::size_t threads : {2, 4, 7}) {
    c.threads = threads;
    const auto par = fit_forest(s, c);
    EXPECT_EQ(par.trees, serial.trees);
    EXPECT_EQ(to_json(par)["trees"], to_json(serial)["trees"]);
  }
  EXPECT_EQ(serial.trees.size(), 10u);
  EXPECT_EQ(serial.tree_seeds.size(), 10u);
  c.seed = 6;
  EXPECT_NE(fit_forest(s, c).trees, serial.trees);
}

TEST(FitForest, TreeSeedsDistinctAndPure) {
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < 100; ++i) seen.insert(tree_seed(0, i));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(tree_seed(3, 4), tree_seed(3, 4));
  EXPECT_NE(tree_seed(3, 4), tree_seed(4, 3));
}

TEST(FitForest, BootstrapRootSeesNSamples) {
  const auto s = random_set(64, 3, 9);
  const auto f = fit_forest(s, ForestConfig{});
  for (const auto& t : f.trees) EXPECT_EQ(t.nodes[0].n_samples, 64u);
}

TEST(Predict, MeanOfTreesAndBounds) {
  Forest f;
  f.n_features = 1;
  Node a, b;
  a.value = 0.9;
  b.value = 0.96;
  f.trees = {Tree{{a}}, Tree{{b}}};
  EXPECT_DOUBLE_EQ(predict_row(f, std::vector<double>{0.0}), 0.93);

  const auto s = random_set(200, 4, 10);
  const auto lo = *std::min_element(s.targets().begin(), s.targets().end());
  const auto hi = *std::max_element(s.targets().begin(), s.targets().end());
  const auto forest = fit_forest(s, ForestConfig{});
  const auto probe = random_set(300, 4, 11);
  const auto pred = predict_forest(forest, probe);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    double tmin = INFINITY, tmax = -INFINITY;
    for (const auto& t : forest.trees) {
      tmin = std::min(tmin, t.predict(probe.row(i)));
      tmax = std::max(tmax, t.predict(probe.row(i)));
    }
    ASSERT_GE(pred[i], tmin - 1e-15);
    ASSERT_LE(pred[i], tmax + 1e-15);
    ASSERT_GE(pred[i], lo);
    ASSERT_LE(pred[i], hi);
  }
  const TrainingSet wrong({1, 2}, {0, 0}, 1);
  EXPECT_THROW(predict_forest(forest, wrong), ShapeError);
}

TEST(Importance, OneHotWhenOnlyOneFeatureSplits) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x, y;
  for (int i = 0; i < 100; ++i) {
    const double v = u(rng);
    x.insert(x.end(), {1.0, 2.0, 3.0, v, 5.0});
    y.push_back(v > 0.5 ? 1.0 : 0.0);
  }
  const TrainingSet s(std::move(x), std::move(y), 5);
  const auto imp = feature_importance(fit_forest(s, ForestConfig{}));
  EXPECT_EQ(imp, (std::vector<double>{0, 0, 0, 1, 0}));
  const auto top = top_k(imp, schema_of(5), 1);
  EXPECT_EQ(top[0].index, 3u);
  EXPECT_EQ(top[0].name, "f3");
}

TEST(Importance, ZeroWithoutSplitsAndSumsToOneOtherwise) {
  const TrainingSet flat({1, 2, 3, 4, 1, 2}, {0.5, 0.5, 0.5}, 2);
  for (double v : feature_importance(fit_forest(flat, ForestConfig{}))) EXPECT_EQ(v, 0.0);
  const auto s = random_set(200, 7, 12);
  const auto imp = feature_importance(fit_forest(s, ForestConfig{}));
  EXPECT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), 1.0, 1e-12);
  for (double v : imp) EXPECT_GE(v, 0.0);
}

// MDI recomputed from the stored nodes.
TEST(Importance, MatchesNodeGainTally) {
  const auto s = random_set(150, 5, 13);
  const auto f = fit_forest(s, ForestConfig{});
  std::vector<double> tally(5, 0.0);
  for (const auto& t : f.trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) tally[n.feature] += n.gain / t.nodes[0].n_samples / f.trees.size();
  const double total = std::accumulate(tally.begin(), tally.end(), 0.0);
  const auto imp = feature_importance(f);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(imp[j], tally[j] / total, 1e-12);
}

TEST(TopK, TiesByIndexAndFullPermutation) {
  std::vector<double> imp(12, 0.01);
  imp[9] = 0.3;
  imp[4] = 0.3;
  imp[7] = 0.2;
  const auto schema = schema_of(12);
  const auto top = top_k(imp, schema, 3);
  EXPECT_EQ(top[0].index, 4u);
  EXPECT_EQ(top[1].index, 9u);
  EXPECT_EQ(top[2].index, 7u);
  const auto all = top_k(imp, schema, 12);
  std::set<std::size_t> idx;
  for (const auto& r : all) idx.insert(r.index);
  EXPECT_EQ(idx.size(), 12u);
  EXPECT_THROW(top_k(imp, schema, 13), KTooLarge);
}

TEST(ForestConfigJson, DefaultsAndRejection) {
  ForestConfig c;
  EXPECT_EQ(c.n_trees, 10u);
  EXPECT_EQ(c.resolved_mtry(93), 31u);
  EXPECT_EQ(c.resolved_mtry(10), 4u);
  c.mtry = 5;
  c.max_depth = 7;
  c.seed = 11;
  const auto back = forest_config_from_json(to_json(c));
  EXPECT_EQ(back.mtry, 5u);
  EXPECT_EQ(back.max_depth, 7u);
  EXPECT_EQ(back.seed, 11u);
  EXPECT_THROW(forest_config_from_json({{"trees", 5}}), InvalidConfig);
  ForestConfig bad;
  bad.mtry = 20;
  EXPECT_THROW(bad.validate(10), InvalidConfig);
}

TEST(ForestCheckpoint, RoundTripBitForBit) {
  const auto s = random_set(100, 4, 14);
  ForestConfig c;
  c.max_depth = 6;
  const auto f = fit_forest(s, c);
  const auto path = std::filesystem::temp_directory_path() / "sleepeff_forest_test.json";
  save_forest(f, path);
  const auto back = load_forest(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.trees, f.trees);
  EXPECT_EQ(back.tree_seeds, f.tree_seeds);
  EXPECT_EQ(predict_forest(back, s), predict_forest(f, s));
}
