#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sleepeff/errors.hpp"
#include "sleepeff/forest.hpp"
#include "tree_builder.hpp"

namespace sleepeff::forest {

TrainingSet::TrainingSet(std::vector<double> x, std::vector<double> y, std::size_t n_features)
    : x_(std::move(x)), y_(std::move(y)), p_(n_features) {
  if (p_ == 0) throw ShapeError("training set needs at least one feature");
  if (x_.size() != y_.size() * p_) throw ShapeError("feature matrix size does not match n * p");
}

TrainingSet TrainingSet::from_table(const dataset::MergedTable& table) {
  const std::size_t p = table.schema.input_length();
  std::vector<double> x;
  x.reserve(table.size() * p);
  for (const auto& row : table.rows) {
    if (row.features.size() != p) throw ShapeError("row length differs from schema");
    x.insert(x.end(), row.features.begin(), row.features.end());
  }
  return TrainingSet(std::move(x), table.targets(), p);
}

std::size_t Tree::leaf_of(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const Node& n = nodes[i];
    i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? i + 1 : n.right;
  }
  return i;
}

double Tree::predict(std::span<const double> x) const { return nodes[leaf_of(x)].value; }

std::size_t Tree::depth() const {
  // Preorder walk carrying depths on an explicit stack.
  std::size_t deepest = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[i].is_leaf()) {
      stack.emplace_back(i + 1, d + 1);
      stack.emplace_back(nodes[i].right, d + 1);
    }
  }
  return deepest;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
}

std::size_t ForestConfig::resolved_mtry(std::size_t p) const {
  return mtry ? *mtry : (p + 2) / 3;
}

void ForestConfig::validate(std::size_t p) const {
  if (n_trees == 0) throw InvalidConfig("n_trees must be positive");
  if (min_samples_leaf == 0) throw InvalidConfig("min_samples_leaf must be positive");
  const std::size_t m = resolved_mtry(p);
  if (m == 0 || m > p)
    throw InvalidConfig("mtry must lie in [1, " + std::to_string(p) + "], got " + std::to_string(m));
}

namespace detail {

TreeBuilder::TreeBuilder(const TrainingSet& rows, const ForestConfig& config, std::mt19937_64& rng)
    : rows_(rows),
      min_leaf_(config.min_samples_leaf),
      max_depth_(config.max_depth),
      mtry_(config.resolved_mtry(rows.n_features())),
      rng_(rng),
      features_(rows.n_features()) {
  std::iota(features_.begin(), features_.end(), 0);
}

Tree TreeBuilder::grow(std::vector<std::size_t> sample) {
  if (sample.empty()) throw EmptyInput("fit_tree: no rows");
  sample_ = std::move(sample);
  tree_ = Tree{};
  build(0, sample_.size(), 0);
  return std::move(tree_);
}

void TreeBuilder::build(std::size_t begin, std::size_t end, std::size_t depth) {
  const std::size_t n = end - begin;
  const double nd = static_cast<double>(n);

  double sum = 0.0;
  bool pure = true;
  const double first = rows_.y(sample_[begin]);
  for (std::size_t i = begin; i < end; ++i) {
    const double y = rows_.y(sample_[i]);
    sum += y;
    pure = pure && y == first;
  }
  const double mean = pure ? first : sum / nd;
  double ss = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double d = rows_.y(sample_[i]) - mean;
    ss += d * d;
  }

  const std::size_t self = tree_.nodes.size();
  tree_.nodes.push_back(Node{-1, 0.0, mean, n, pure ? 0.0 : ss / nd, 0.0, 0});

  if (pure || n < 2 * min_leaf_ || (max_depth_ && depth >= *max_depth_)) return;

  const Split best = find_split(begin, end, mean);
  if (!(best.gain > 0.0)) return;

  auto mid = std::stable_partition(
      sample_.begin() + static_cast<std::ptrdiff_t>(begin),
      sample_.begin() + static_cast<std::ptrdiff_t>(end),
      [&](std::size_t r) { return rows_.x(r, best.feature) < best.threshold; });
  const std::size_t split_at = static_cast<std::size_t>(mid - sample_.begin());

  tree_.nodes[self].feature = static_cast<int>(best.feature);
  tree_.nodes[self].threshold = best.threshold;
  tree_.nodes[self].gain = best.gain;
  build(begin, split_at, depth + 1);
  tree_.nodes[self].right = static_cast<std::uint32_t>(tree_.nodes.size());
  build(split_at, end, depth + 1);
}

TreeBuilder::Split TreeBuilder::find_split(std::size_t begin, std::size_t end, double mean) {
  const std::size_t n = end - begin;
  const double nd = static_cast<double>(n);

  // Partial Fisher-Yates draw of mtry distinct features, scanned in index order.
  for (std::size_t i = 0; i < mtry_; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, features_.size() - 1);
    std::swap(features_[i], features_[pick(rng_)]);
  }
  std::vector<std::size_t> candidates(features_.begin(),
                                      features_.begin() + static_cast<std::ptrdiff_t>(mtry_));
  std::sort(candidates.begin(), candidates.end());

  // Centred targets keep the sums small on narrow target ranges.
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) total += rows_.y(sample_[i]) - mean;
  const double parent_term = total * total / nd;

  Split best;
  scratch_.resize(n);
  for (std::size_t f : candidates) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = sample_[begin + i];
      scratch_[i] = {rows_.x(r, f), rows_.y(r) - mean};
    }
    std::sort(scratch_.begin(), scratch_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (scratch_.front().first == scratch_.back().first) continue;

    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += scratch_[i].second;
      const std::size_t n_left = i + 1;
      const std::size_t n_right = n - n_left;
      if (scratch_[i].first == scratch_[i + 1].first) continue;
      if (n_left < min_leaf_) continue;
      if (n_right < min_leaf_) break;
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                          right_sum * right_sum / static_cast<double>(n_right) - parent_term;
      if (gain > best.gain) {
        const double lo = scratch_[i].first;
        const double hi = scratch_[i + 1].first;
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold > lo)) threshold = hi;
        best = {f, threshold, gain};
      }
    }
  }
  return best;
}

}  // namespace detail

Tree fit_tree(const TrainingSet& rows, const ForestConfig& config, std::uint64_t tree_seed) {
  if (rows.size() == 0) throw EmptyInput("fit_tree: no rows");
  config.validate(rows.n_features());
  std::mt19937_64 rng(tree_seed);
  std::vector<std::size_t> sample(rows.size());
  std::iota(sample.begin(), sample.end(), 0);
  return detail::TreeBuilder(rows, config, rng).grow(std::move(sample));
}

}  // namespace sleepeff::forest
