#include <cmath>
#include <map>
#include <random>

#include "sleepeff/errors.hpp"
#include "sleepeff/neuralnet.hpp"

namespace sleepeff::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

struct LayerDims {
  std::size_t weights = 0;
  std::size_t bias = 0;
  double fan_in = 0;
  double fan_out = 0;
};

// Parameter sizes of each layer given the shape flowing into it.
std::vector<LayerDims> layer_dims(const ArchitectureSpec& spec) {
  std::vector<LayerDims> dims;
  Shape in{spec.input_length, 1, false};
  const auto shapes = propagate_shapes(spec.layers, spec.input_length);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    LayerDims d;
    std::visit(overloaded{[&](const Conv1D& c) {
                            d.weights = c.filters * in.channels * c.kernel_size;
                            d.bias = c.filters;
                            d.fan_in = static_cast<double>(in.channels * c.kernel_size);
                            d.fan_out = static_cast<double>(c.filters * c.kernel_size);
                          },
                          [&](const Dense& c) {
                            d.weights = c.units * in.channels;
                            d.bias = c.units;
                            d.fan_in = static_cast<double>(in.channels);
                            d.fan_out = static_cast<double>(c.units);
                          },
                          [&](const RegressionHead&) {
                            d.weights = in.size();
                            d.bias = 1;
                            d.fan_in = static_cast<double>(in.size());
                            d.fan_out = 1.0;
                          },
                          [](const auto&) {}},
               spec.layers[l]);
    dims.push_back(d);
    in = shapes[l];
  }
  return dims;
}

}  // namespace

std::string Shape::to_string() const {
  if (flat) return std::to_string(size());
  return "(" + std::to_string(length) + ", " + std::to_string(channels) + ")";
}

std::string describe(const LayerSpec& layer) {
  return std::visit(
      overloaded{[](const Conv1D& c) {
                   return "Conv1D(k=" + std::to_string(c.kernel_size) +
                          ", F=" + std::to_string(c.filters) + ", " +
                          activation_name(c.activation) + ")";
                 },
                 [](const MaxPool& p) { return "MaxPool(" + std::to_string(p.pool) + ")"; },
                 [](const Dense& d) {
                   return "Dense(" + std::to_string(d.units) + ", " +
                          activation_name(d.activation) + ")";
                 },
                 [](const Flatten&) { return std::string("Flatten"); },
                 [](const RegressionHead&) { return std::string("RegressionHead"); }},
      layer);
}

std::vector<Shape> propagate_shapes(std::span<const LayerSpec> layers, std::size_t input_length) {
  if (input_length == 0) throw ShapeError("input length must be positive");
  Shape cur{input_length, 1, false};
  std::vector<Shape> out;
  out.reserve(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string where = "layer " + std::to_string(l) + " " + describe(layers[l]);
    std::visit(overloaded{[&](const Conv1D& c) {
                            if (c.kernel_size == 0 || c.filters == 0)
                              throw InvalidConfig(where + ": kernel size and filters must be >= 1");
                            if (cur.flat) throw ShapeError(where + ": input is already flat");
                            if (cur.length < c.kernel_size)
                              throw ShapeError(where + ": input length " + std::to_string(cur.length) +
                                               " shorter than kernel");
                            cur = {cur.length - c.kernel_size + 1, c.filters, false};
                          },
                          [&](const MaxPool& p) {
                            if (p.pool == 0) throw InvalidConfig(where + ": pool must be >= 1");
                            if (cur.flat) throw ShapeError(where + ": input is already flat");
                            if (cur.length < p.pool)
                              throw ShapeError(where + ": input length " + std::to_string(cur.length) +
                                               " shorter than pool");
                            cur = {cur.length / p.pool, cur.channels, false};
                          },
                          [&](const Dense& d) {
                            if (d.units == 0) throw InvalidConfig(where + ": units must be >= 1");
                            if (cur.flat) throw ShapeError(where + ": input is already flat");
                            cur = {cur.length, d.units, false};
                          },
                          [&](const Flatten&) { cur = {cur.size(), 1, true}; },
                          [&](const RegressionHead&) {
                            if (!cur.flat) throw ShapeError(where + ": head needs a flattened input");
                            cur = {1, 1, true};
                          }},
               layers[l]);
    out.push_back(cur);
  }
  return out;
}

std::size_t ArchitectureSpec::flat_length() const {
  for (std::size_t l = 0; l < expected_shapes.size(); ++l)
    if (std::holds_alternative<Flatten>(layers[l])) return expected_shapes[l].size();
  throw ShapeError("architecture " + id + " has no Flatten layer");
}

const std::vector<std::string>& architecture_ids() {
  static const std::vector<std::string> ids{"A1", "A2", "A3", "A4", "A5", "A6"};
  return ids;
}

std::string pattern_name(std::string_view id) {
  static const std::map<std::string, std::string, std::less<>> names{
      {"A1", "C-P-FC-FC"},     {"A2", "C-P-C-P-FC"},         {"A3", "C-P-C-P-FC"},
      {"A4", "C-C-P-C-C-P-FC"}, {"A5", "C-P-C-P-FC-FC"},     {"A6", "C-P-C-P-C-P"}};
  auto it = names.find(id);
  if (it == names.end()) throw UnknownArchitecture(std::string(id));
  return it->second;
}

ArchitectureSpec build_architecture(std::string_view id, std::size_t input_length) {
  constexpr std::size_t kFilters = 32;
  constexpr std::size_t kPool = 2;
  constexpr std::size_t kUnits = 16;
  auto conv = [](std::size_t k) { return Conv1D{k, kFilters, Activation::relu}; };
  const MaxPool pool{kPool};
  const Dense dense{kUnits, Activation::linear};

  ArchitectureSpec spec;
  spec.id = std::string(id);
  spec.input_length = input_length;
  if (id == "A1") {
    spec.layers = {conv(20), pool, dense, dense, Flatten{}};
  } else if (id == "A2") {
    spec.layers = {conv(3), pool, conv(3), pool, dense, Flatten{}};
  } else if (id == "A3") {
    spec.layers = {conv(5), pool, conv(5), pool, dense, Flatten{}};
  } else if (id == "A4") {
    spec.layers = {conv(5), conv(5), pool, conv(5), conv(5), pool, dense, Flatten{}};
  } else if (id == "A5") {
    spec.layers = {conv(5), pool, conv(5), pool, dense, dense, Flatten{}};
  } else if (id == "A6") {
    spec.layers = {conv(12), pool, conv(12), pool, conv(12), pool, Flatten{}};
  } else {
    throw UnknownArchitecture(std::string(id));
  }
  spec.layers.push_back(RegressionHead{});
  auto shapes = propagate_shapes(spec.layers, input_length);
  shapes.pop_back();
  spec.expected_shapes = std::move(shapes);
  return spec;
}

std::size_t Parameters::count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

Parameters zero_parameters(const ArchitectureSpec& spec) {
  Parameters p;
  for (const auto& d : layer_dims(spec))
    p.layers.push_back({std::vector<double>(d.weights, 0.0), std::vector<double>(d.bias, 0.0)});
  return p;
}

Parameters init_parameters(const ArchitectureSpec& spec, std::uint64_t seed) {
  Parameters p = zero_parameters(spec);
  const auto dims = layer_dims(spec);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (dims[l].weights == 0) continue;
    const double a = std::sqrt(6.0 / (dims[l].fan_in + dims[l].fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& w : p.layers[l].weights) w = dist(rng);
  }
  return p;
}

void check_parameters(const ArchitectureSpec& spec, const Parameters& params) {
  const auto dims = layer_dims(spec);
  if (params.layers.size() != dims.size())
    throw ShapeError("parameter set has " + std::to_string(params.layers.size()) +
                     " layers, architecture " + spec.id + " has " + std::to_string(dims.size()));
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (params.layers[l].weights.size() != dims[l].weights ||
        params.layers[l].bias.size() != dims[l].bias)
      throw ShapeError("parameter shapes of layer " + std::to_string(l) + " (" +
                       describe(spec.layers[l]) + ") do not match architecture " + spec.id);
  }
}

}  // namespace sleepeff::nn
