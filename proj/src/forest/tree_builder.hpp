#pragma once

#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "sleepeff/forest.hpp"

namespace sleepeff::forest::detail {

// Grows one tree over a (possibly repeated) sample of row indices.
class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& rows, const ForestConfig& config, std::mt19937_64& rng);
  Tree grow(std::vector<std::size_t> sample);

 private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
  };

  void build(std::size_t begin, std::size_t end, std::size_t depth);
  Split find_split(std::size_t begin, std::size_t end, double mean);

  const TrainingSet& rows_;
  std::size_t min_leaf_;
  std::optional<std::size_t> max_depth_;
  std::size_t mtry_;
  std::mt19937_64& rng_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> sample_;
  std::vector<std::pair<double, double>> scratch_;
  Tree tree_;
};

}  // namespace sleepeff::forest::detail
