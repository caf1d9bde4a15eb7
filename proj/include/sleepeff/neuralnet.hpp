#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "sleepeff/dataset.hpp"

namespace sleepeff::nn {

enum class Activation { relu, linear };

// Output shape of a layer. Flat shapes (after Flatten) print as a single
// number, 2D shapes as "(positions, channels)".
struct Shape {
  std::size_t length = 0;
  std::size_t channels = 0;
  bool flat = false;

  std::size_t size() const noexcept { return length * channels; }
  std::string to_string() const;
  bool operator==(const Shape&) const = default;
};

// (positions x channels) map, row-major: value(i, c) = values[i * channels + c].
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t length, std::size_t channels);  // zero-filled
  // Throws ShapeError on a size mismatch and std::invalid_argument on NaN/Inf.
  FeatureMap(std::size_t length, std::size_t channels, std::vector<double> values);

  std::size_t length() const noexcept { return length_; }
  std::size_t channels() const noexcept { return channels_; }
  double operator()(std::size_t i, std::size_t c) const { return values_[i * channels_ + c]; }
  double& operator()(std::size_t i, std::size_t c) { return values_[i * channels_ + c]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

 private:
  std::size_t length_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

struct Conv1D {
  std::size_t kernel_size = 1;
  std::size_t filters = 32;
  Activation activation = Activation::relu;
  bool operator==(const Conv1D&) const = default;
};

struct MaxPool {
  std::size_t pool = 2;
  bool operator==(const MaxPool&) const = default;
};

// Applied independently at every position; only the channel count changes.
struct Dense {
  std::size_t units = 16;
  Activation activation = Activation::linear;
  bool operator==(const Dense&) const = default;
};

struct Flatten {
  bool operator==(const Flatten&) const = default;
};

// Scalar output: bias + dot(weights, flattened input).
struct RegressionHead {
  bool operator==(const RegressionHead&) const = default;
};

using LayerSpec = std::variant<Conv1D, MaxPool, Dense, Flatten, RegressionHead>;

std::string describe(const LayerSpec& layer);

// Output shapes of every layer for an (input_length, 1) input.
std::vector<Shape> propagate_shapes(std::span<const LayerSpec> layers, std::size_t input_length);

struct ArchitectureSpec {
  std::string id;
  std::size_t input_length = 0;
  std::vector<LayerSpec> layers;  // ends with RegressionHead
  // Output shape of every layer before the head.
  std::vector<Shape> expected_shapes;

  std::size_t flat_length() const;
};

const std::vector<std::string>& architecture_ids();
// Layer pattern such as "C-P-C-P-FC".
std::string pattern_name(std::string_view id);

// A1 = C-P-FC-FC (k20), A2 = C-P-C-P-FC (k3), A3 = C-P-C-P-FC (k5),
// A4 = C-C-P-C-C-P-FC (k5), A5 = C-P-C-P-FC-FC (k5), A6 = C-P-C-P-C-P (k12).
// All convolutions have 32 filters with ReLU, pools are 2 wide, dense layers
// have 16 linear units; a RegressionHead is appended. Throws
// UnknownArchitecture, or ShapeError when input_length is too short.
ArchitectureSpec build_architecture(std::string_view id, std::size_t input_length = 93);

// ---------------------------------------------------------------------------
// Parameters

// Conv1D: weights (F, C_in, k), bias (F). Dense: weights (U, C_in), bias (U).
// Head: weights (flat_len), bias (1). Pool/Flatten: empty.
struct LayerParams {
  std::vector<double> weights;
  std::vector<double> bias;
  bool operator==(const LayerParams&) const = default;
};

struct Parameters {
  std::vector<LayerParams> layers;

  std::size_t count() const noexcept;
  bool operator==(const Parameters&) const = default;
};

Parameters zero_parameters(const ArchitectureSpec& spec);
// Weights ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)); biases 0. For a
// convolution fan_in = C_in * k and fan_out = F * k.
Parameters init_parameters(const ArchitectureSpec& spec, std::uint64_t seed);
// Throws ShapeError if params do not fit spec.
void check_parameters(const ArchitectureSpec& spec, const Parameters& params);

// ---------------------------------------------------------------------------
// Layer operations

// out[i, f] = act(bias[f] + sum_c sum_j weights[f, c, j] * in[i + j, c]).
FeatureMap conv1d_forward(const FeatureMap& input, std::span<const double> weights,
                          std::span<const double> bias, std::size_t kernel_size,
                          Activation activation);
// Window = stride = pool; a trailing remainder is discarded.
FeatureMap maxpool_forward(const FeatureMap& input, std::size_t pool = 2);
FeatureMap dense_forward(const FeatureMap& input, std::span<const double> weights,
                         std::span<const double> bias, Activation activation);
// Position-major: element t * C + c = input(t, c).
std::vector<double> flatten(const FeatureMap& input);

double forward(const ArchitectureSpec& spec, const Parameters& params, const FeatureMap& input);
// Output of every layer, in order. Flatten yields a (T*C, 1) map and the
// head a (1, 1) map.
std::vector<FeatureMap> forward_trace(const ArchitectureSpec& spec, const Parameters& params,
                                      const FeatureMap& input);

struct Sample {
  std::span<const double> input;  // length spec.input_length
  double target = 0.0;
};

struct BackwardResult {
  Parameters gradients;
  double mse = 0.0;
};

// Gradient of the batch mean squared error. ReLU'(0) = 0 and max-pool routes
// the gradient to the first maximal position of each window.
BackwardResult backward(const ArchitectureSpec& spec, const Parameters& params,
                        std::span<const Sample> batch);

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { sgd, adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Fit standardized targets and fold the inverse map into the regression
  // head afterwards.
  bool scale_target = true;

  void validate() const;  // throws InvalidConfig
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
// Starts from `base` and applies the keys present in `overrides`.
TrainConfig train_config_from_json(const nlohmann::json& overrides, TrainConfig base = {});

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_mae = 0.0;
  double train_mse = 0.0;
};

struct TrainResult {
  Parameters params;
  std::vector<EpochMetrics> history;  // scored on the full training set after each epoch
};

// Mini-batch training on MSE. Deterministic for a fixed config.seed. Throws
// DivergedError when a batch loss becomes non-finite or exceeds 1e8 times the
// loss of predicting zero for every (fitted) target.
TrainResult train(const ArchitectureSpec& spec, const dataset::MergedTable& table,
                  const TrainConfig& config);

std::vector<double> predict(const ArchitectureSpec& spec, const Parameters& params,
                            const dataset::MergedTable& table);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  ArchitectureSpec spec;
  Parameters params;
  std::uint64_t schema_fingerprint = 0;
  TrainConfig train_config;
  nlohmann::json final_metrics = nlohmann::json::object();
};

nlohmann::json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sleepeff::nn
