#pragma once

// Straightforward nested-loop network used as an oracle for the library's
// kernels. Reads only the public layer specs and parameter layout.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sleepeff/neuralnet.hpp"

namespace ref {

// value(i, c) = v[i * channels + c]
struct Map {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::vector<double> v;

  double at(std::size_t i, std::size_t c) const { return v[i * channels + c]; }
};

Map conv(const Map& in, const std::vector<double>& w, const std::vector<double>& b, std::size_t k,
         std::size_t filters, bool relu);
Map pool(const Map& in, std::size_t p);
Map dense(const Map& in, const std::vector<double>& w, const std::vector<double>& b,
          std::size_t units, bool relu);
Map flatten(const Map& in);
double head(const Map& in, const std::vector<double>& w, const std::vector<double>& b);

// Per-layer outputs plus the piecewise-linear branch taken at every ReLU and
// pool window, so finite differences can tell when a perturbation crossed a
// kink.
struct Trace {
  std::vector<Map> outputs;
  std::vector<std::vector<std::uint32_t>> branches;
  double prediction = 0.0;
};

// Runs layers [first, end) starting from `input` (the output of layer
// first - 1, or the network input when first == 0).
Trace run(const sleepeff::nn::ArchitectureSpec& spec, const sleepeff::nn::Parameters& params,
          const Map& input, std::size_t first = 0);

Map input_map(std::span<const double> x);

// Spec for an arbitrary layer stack; a RegressionHead is appended when the
// stack does not end with one.
sleepeff::nn::ArchitectureSpec custom_spec(std::vector<sleepeff::nn::LayerSpec> layers,
                                           std::size_t input_length);

// Parameters with every entry drawn from U(-scale, scale).
sleepeff::nn::Parameters random_parameters(const sleepeff::nn::ArchitectureSpec& spec,
                                           std::uint64_t seed, double scale = 1.0);

struct GradCheckStats {
  std::size_t checked = 0;
  std::size_t kink_skipped = 0;
  double max_rel_error = 0.0;
  std::size_t worst_layer = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double h = 1e-5;
  // Denominator floor for the relative error; keeps round-off on gradients
  // that are zero in exact arithmetic from counting as relative error.
  double floor = 1e-6;
  // Per-tensor cap on checked entries; 0 checks every entry. Capped tensors
  // are sampled without replacement from `seed`.
  std::size_t max_per_tensor = 0;
  std::uint64_t seed = 1;
};

// Central finite differences of the batch MSE computed by this reference,
// compared with `analytic` (same layout as Parameters).
GradCheckStats check_gradients(const sleepeff::nn::ArchitectureSpec& spec,
                               const sleepeff::nn::Parameters& params,
                               const std::vector<std::vector<double>>& inputs,
                               const std::vector<double>& targets,
                               const sleepeff::nn::Parameters& analytic,
                               const GradCheckOptions& options);

}  // namespace ref
