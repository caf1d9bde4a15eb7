#include <cmath>

#include "sleepeff/errors.hpp"
#include "sleepeff/experiment.hpp"

namespace sleepeff::experiment {

namespace {

void check_lengths(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw LengthMismatch(predictions.size(), targets.size());
  if (predictions.empty()) throw EmptyInput("metric over zero predictions");
}

}  // namespace

double mae(std::span<const double> predictions, std::span<const double> targets) {
  check_lengths(predictions, targets);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += std::abs(predictions[i] - targets[i]);
  return sum / static_cast<double>(predictions.size());
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
  check_lengths(predictions, targets);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    sum += e * e;
  }
  return sum / static_cast<double>(predictions.size());
}

MetricPair metrics(std::span<const double> predictions, std::span<const double> targets) {
  return {mae(predictions, targets), mse(predictions, targets)};
}

MetricPair baseline_mean(const dataset::MergedTable& train, const dataset::MergedTable& test) {
  if (train.empty()) throw EmptyInput("baseline_mean: empty training table");
  double mean = 0.0;
  for (const auto& row : train.rows) mean += row.target;
  mean /= static_cast<double>(train.size());
  const std::vector<double> predictions(test.size(), mean);
  return metrics(predictions, test.targets());
}

const std::vector<std::pair<std::string, double>>& reference_mae() {
  static const std::vector<std::pair<std::string, double>> values{
      {"RF", 0.0282}, {"A2", 0.0357}, {"A3", 0.0429}, {"A5", 0.0679},
      {"A4", 0.0844}, {"A1", 0.0876}, {"A6", 0.9361}};
  return values;
}

std::vector<ReferenceComparison> compare_to_reference(const ExperimentReport& report,
                                                      double tolerance) {
  std::vector<ReferenceComparison> out;
  for (const auto& [model, reference] : reference_mae()) {
    for (const auto& row : report.rows) {
      if (row.model != model) continue;
      out.push_back({model, reference, row.test.mae,
                     std::abs(row.test.mae - reference) <= tolerance});
    }
  }
  return out;
}

}  // namespace sleepeff::experiment
