#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sleepeff/dataset.hpp"

namespace sleepeff::forest {

// Row-major feature matrix plus targets.
class TrainingSet {
 public:
  TrainingSet(std::vector<double> x, std::vector<double> y, std::size_t n_features);
  static TrainingSet from_table(const dataset::MergedTable& table);

  std::size_t size() const noexcept { return y_.size(); }
  std::size_t n_features() const noexcept { return p_; }
  std::span<const double> row(std::size_t i) const { return {x_.data() + i * p_, p_}; }
  double x(std::size_t i, std::size_t j) const { return x_[i * p_ + j]; }
  double y(std::size_t i) const { return y_[i]; }
  std::span<const double> targets() const noexcept { return y_; }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::size_t p_ = 0;
};

// Flat preorder node. An internal node's left child is the next node; its
// right child is at index `right`. Samples with x[feature] < threshold go left.
struct Node {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  double value = 0.0;     // mean target of the node's training samples
  std::size_t n_samples = 0;
  double impurity = 0.0;  // population variance of the node's targets
  double gain = 0.0;      // N*Var(parent) - (N_L*Var(left) + N_R*Var(right))
  std::uint32_t right = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const Node&) const = default;
};

struct Tree {
  std::vector<Node> nodes;

  double predict(std::span<const double> x) const;
  // Index of the leaf reached by x.
  std::size_t leaf_of(std::span<const double> x) const;
  std::size_t depth() const;
  std::size_t leaf_count() const;
  bool operator==(const Tree&) const = default;
};

struct ForestConfig {
  std::size_t n_trees = 10;
  std::optional<std::size_t> mtry;  // default ceil(p / 3)
  std::size_t min_samples_leaf = 1;
  std::optional<std::size_t> max_depth;  // default unlimited
  std::uint64_t seed = 0;
  bool bootstrap = true;  // off only in tests
  // Worker threads for tree fitting; 0 picks the hardware concurrency. Never
  // changes the fitted forest.
  std::size_t threads = 0;

  std::size_t resolved_mtry(std::size_t p) const;
  void validate(std::size_t p) const;  // throws InvalidConfig
};

nlohmann::json to_json(const ForestConfig& config);
ForestConfig forest_config_from_json(const nlohmann::json& overrides, ForestConfig base = {});

struct Forest {
  std::vector<Tree> trees;
  std::vector<std::uint64_t> tree_seeds;
  ForestConfig config;
  std::size_t n_features = 0;
};

// Seed of tree `index`'s generator, a pure function of (seed, index).
std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t index);

// CART regression tree on every row of `rows`, splitting on weighted variance
// reduction with mtry features drawn per split from a generator seeded with
// tree_seed. Ties prefer the lower feature index, then the smaller threshold.
Tree fit_tree(const TrainingSet& rows, const ForestConfig& config, std::uint64_t tree_seed);

// Each tree is grown on a size-n bootstrap resample drawn from its own
// generator; trees may be fitted in parallel with bit-identical results.
Forest fit_forest(const TrainingSet& rows, const ForestConfig& config);
Forest fit_forest(const dataset::MergedTable& table, const ForestConfig& config);

double predict_row(const Forest& forest, std::span<const double> x);
std::vector<double> predict_forest(const Forest& forest, const dataset::MergedTable& table);
std::vector<double> predict_forest(const Forest& forest, const TrainingSet& rows);

// Mean decrease in impurity, averaged over trees and normalised to sum 1.
// All zeros when no tree has a split.
std::vector<double> feature_importance(const Forest& forest);

struct RankedFeature {
  std::size_t index = 0;
  std::string name;
  double importance = 0.0;
};

// Descending importance, ties by ascending index. Throws KTooLarge if k > p.
std::vector<RankedFeature> top_k(std::span<const double> importance,
                                 const dataset::FeatureSchema& schema, std::size_t k);

nlohmann::json to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& doc);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace sleepeff::forest
