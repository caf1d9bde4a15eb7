#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "engine.hpp"
#include "sleepeff/errors.hpp"
#include "sleepeff/neuralnet.hpp"

namespace sleepeff::nn {

FeatureMap::FeatureMap(std::size_t length, std::size_t channels)
    : length_(length), channels_(channels), values_(length * channels, 0.0) {
  if (length == 0 || channels == 0) throw ShapeError("feature map dimensions must be >= 1");
}

FeatureMap::FeatureMap(std::size_t length, std::size_t channels, std::vector<double> values)
    : length_(length), channels_(channels), values_(std::move(values)) {
  if (length == 0 || channels == 0) throw ShapeError("feature map dimensions must be >= 1");
  if (values_.size() != length * channels)
    throw ShapeError("feature map of shape (" + std::to_string(length) + ", " +
                     std::to_string(channels) + ") given " + std::to_string(values_.size()) +
                     " values");
  for (double v : values_)
    if (!std::isfinite(v)) throw std::invalid_argument("feature map holds a non-finite value");
}

FeatureMap conv1d_forward(const FeatureMap& input, std::span<const double> weights,
                          std::span<const double> bias, std::size_t kernel_size,
                          Activation activation) {
  const std::size_t filters = bias.size();
  const std::size_t C = input.channels();
  if (kernel_size == 0 || filters == 0) throw ShapeError("conv1d: kernel and filters must be >= 1");
  if (input.length() < kernel_size)
    throw ShapeError("conv1d: input length " + std::to_string(input.length()) +
                     " is shorter than kernel " + std::to_string(kernel_size));
  if (weights.size() != filters * C * kernel_size)
    throw ShapeError("conv1d: weights must have shape (F, C, k)");
  FeatureMap out(input.length() - kernel_size + 1, filters);
  const auto wt = detail::transpose_conv(weights, filters, C, kernel_size);
  detail::conv_forward(input.values().data(), input.length(), C, wt.data(), bias.data(),
                       kernel_size, filters, activation, out.values().data());
  return out;
}

FeatureMap maxpool_forward(const FeatureMap& input, std::size_t pool) {
  if (pool == 0) throw ShapeError("maxpool: pool must be >= 1");
  if (input.length() < pool)
    throw ShapeError("maxpool: input length " + std::to_string(input.length()) +
                     " is shorter than pool " + std::to_string(pool));
  FeatureMap out(input.length() / pool, input.channels());
  std::vector<std::uint32_t> argmax(out.values().size());
  detail::pool_forward(input.values().data(), input.length(), input.channels(), pool,
                       out.values().data(), argmax.data());
  return out;
}

FeatureMap dense_forward(const FeatureMap& input, std::span<const double> weights,
                         std::span<const double> bias, Activation activation) {
  const std::size_t units = bias.size();
  const std::size_t C = input.channels();
  if (units == 0) throw ShapeError("dense: units must be >= 1");
  if (weights.size() != units * C) throw ShapeError("dense: weights must have shape (U, C)");
  FeatureMap out(input.length(), units);
  const auto wt = detail::transpose_dense(weights, units, C);
  detail::dense_forward(input.values().data(), input.length(), C, wt.data(), bias.data(), units,
                        activation, out.values().data());
  return out;
}

std::vector<double> flatten(const FeatureMap& input) {
  return {input.values().begin(), input.values().end()};
}

namespace {

void check_input(const ArchitectureSpec& spec, const FeatureMap& input) {
  if (input.length() != spec.input_length || input.channels() != 1)
    throw ShapeError("architecture " + spec.id + " expects input (" +
                     std::to_string(spec.input_length) + ", 1), got (" +
                     std::to_string(input.length()) + ", " + std::to_string(input.channels()) + ")");
}

}  // namespace

double forward(const ArchitectureSpec& spec, const Parameters& params, const FeatureMap& input) {
  check_input(spec, input);
  check_parameters(spec, params);
  detail::Engine engine(spec);
  engine.load(params);
  return engine.forward(input.values().data());
}

std::vector<FeatureMap> forward_trace(const ArchitectureSpec& spec, const Parameters& params,
                                      const FeatureMap& input) {
  check_input(spec, input);
  check_parameters(spec, params);
  detail::Engine engine(spec);
  engine.load(params);
  engine.forward(input.values().data());
  const auto shapes = propagate_shapes(spec.layers, spec.input_length);
  std::vector<FeatureMap> trace;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    auto out = engine.output(l);
    const bool flat = shapes[l].flat;
    trace.emplace_back(flat ? shapes[l].size() : shapes[l].length, flat ? 1 : shapes[l].channels,
                       std::vector<double>(out.begin(), out.end()));
  }
  return trace;
}

BackwardResult backward(const ArchitectureSpec& spec, const Parameters& params,
                        std::span<const Sample> batch) {
  if (batch.empty()) throw EmptyInput("backward: batch is empty");
  check_parameters(spec, params);
  for (const auto& s : batch)
    if (s.input.size() != spec.input_length)
      throw ShapeError("backward: sample length " + std::to_string(s.input.size()) +
                       " does not match input length " + std::to_string(spec.input_length));
  detail::Engine engine(spec);
  engine.load(params);
  const double scale = 2.0 / static_cast<double>(batch.size());
  double sse = 0.0;
  for (const auto& s : batch) {
    const double err = engine.forward(s.input.data()) - s.target;
    sse += err * err;
    engine.backward(scale * err);
  }
  return {engine.export_gradients(), sse / static_cast<double>(batch.size())};
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidConfig("learning_rate must be > 0");
  if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
  if (epochs == 0) throw InvalidConfig("epochs must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"optimizer", c.optimizer == Optimizer::adam ? "adam" : "sgd"},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"shuffle", c.shuffle},
          {"scale_target", c.scale_target}};
}

TrainConfig train_config_from_json(const nlohmann::json& overrides, TrainConfig base) {
  if (!overrides.is_object()) throw InvalidConfig("train config must be a JSON object");
  try {
    for (const auto& [key, value] : overrides.items()) {
      if (key == "optimizer") {
        const auto name = value.get<std::string>();
        if (name == "adam")
          base.optimizer = Optimizer::adam;
        else if (name == "sgd")
          base.optimizer = Optimizer::sgd;
        else
          throw InvalidConfig("unknown optimizer '" + name + "'");
      } else if (key == "learning_rate") {
        base.learning_rate = value.get<double>();
      } else if (key == "batch_size") {
        base.batch_size = value.get<std::size_t>();
      } else if (key == "epochs") {
        base.epochs = value.get<std::size_t>();
      } else if (key == "seed") {
        base.seed = value.get<std::uint64_t>();
      } else if (key == "shuffle") {
        base.shuffle = value.get<bool>();
      } else if (key == "scale_target") {
        base.scale_target = value.get<bool>();
      } else {
        throw InvalidConfig("unknown key '" + key + "' in train config");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed train config: ") + e.what());
  }
  base.validate();
  return base;
}

namespace {

struct Adam {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;

  explicit Adam(const std::vector<std::span<double>>& tensors) {
    for (const auto& t : tensors) {
      m.emplace_back(t.size(), 0.0);
      v.emplace_back(t.size(), 0.0);
    }
  }

  void update(const std::vector<std::span<double>>& params,
              const std::vector<std::span<double>>& grads, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    for (std::size_t t = 0; t < params.size(); ++t) {
      double* p = params[t].data();
      const double* g = grads[t].data();
      double* mt = m[t].data();
      double* vt = v[t].data();
      for (std::size_t i = 0; i < params[t].size(); ++i) {
        mt[i] = kBeta1 * mt[i] + (1.0 - kBeta1) * g[i];
        vt[i] = kBeta2 * vt[i] + (1.0 - kBeta2) * g[i] * g[i];
        p[i] -= lr * (mt[i] / c1) / (std::sqrt(vt[i] / c2) + kEps);
      }
    }
  }
};

void sgd_update(const std::vector<std::span<double>>& params,
                const std::vector<std::span<double>>& grads, double lr) {
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t].size(); ++i) params[t][i] -= lr * grads[t][i];
}

struct DesignMatrix {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t width = 0;

  const double* row(std::size_t i) const { return x.data() + i * width; }
};

DesignMatrix design(const ArchitectureSpec& spec, const dataset::MergedTable& table) {
  if (table.schema.input_length() != spec.input_length)
    throw ShapeError("table has " + std::to_string(table.schema.input_length()) +
                     " features but architecture " + spec.id + " expects " +
                     std::to_string(spec.input_length));
  DesignMatrix d;
  d.width = spec.input_length;
  d.x.reserve(table.size() * d.width);
  d.y.reserve(table.size());
  for (const auto& row : table.rows) {
    if (row.features.size() != d.width) throw ShapeError("row length differs from schema");
    d.x.insert(d.x.end(), row.features.begin(), row.features.end());
    d.y.push_back(row.target);
  }
  return d;
}

// Affine map from network output to target units.
struct TargetScale {
  double mean = 0.0;
  double sd = 1.0;
};

TargetScale target_scale(const std::vector<double>& y) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(y.size()));
  return {mean, sd > 0.0 ? sd : 1.0};
}

EpochMetrics score(detail::Engine& engine, const DesignMatrix& d, const TargetScale& ts,
                   std::size_t epoch) {
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const double err = engine.forward(d.row(i)) * ts.sd + ts.mean - d.y[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
  }
  const double n = static_cast<double>(d.y.size());
  return {epoch, abs_sum / n, sq_sum / n};
}

}  // namespace

TrainResult train(const ArchitectureSpec& spec, const dataset::MergedTable& table,
                  const TrainConfig& config) {
  config.validate();
  if (table.empty()) throw EmptyInput("train: table has no rows");
  const DesignMatrix data = design(spec, table);
  const std::size_t n = data.y.size();
  const TargetScale ts = config.scale_target ? target_scale(data.y) : TargetScale{};
  std::vector<double> fit_y(n);
  for (std::size_t i = 0; i < n; ++i) fit_y[i] = (data.y[i] - ts.mean) / ts.sd;

  // Adam's step is bounded by the learning rate, so a runaway rate can grow
  // the loss without ever overflowing. A batch loss this many times above
  // the all-zero predictor's (floored at 1) is treated as divergence too.
  constexpr double kBlowUp = 1e8;
  double zero_loss = 0.0;
  for (double v : fit_y) zero_loss += v * v;
  const double loss_limit = kBlowUp * std::max(1.0, zero_loss / static_cast<double>(n));

  detail::Engine engine(spec);
  engine.load(init_parameters(spec, config.seed));
  const auto params = engine.tensors();
  const auto grads = engine.gradient_tensors();
  Adam adam(params);

  std::seed_seq shuffle_seed{static_cast<std::uint32_t>(config.seed),
                             static_cast<std::uint32_t>(config.seed >> 32), 0x5eedu};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const double scale = 2.0 / static_cast<double>(end - start);
      engine.zero_grad();
      double sse = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const double err = engine.forward(data.row(i)) - fit_y[i];
        sse += err * err;
        engine.backward(scale * err);
      }
      if (!std::isfinite(sse) || sse / static_cast<double>(end - start) > loss_limit)
        throw DivergedError(epoch, batch_no + 1);
      if (config.optimizer == Optimizer::adam)
        adam.update(params, grads, config.learning_rate);
      else
        sgd_update(params, grads, config.learning_rate);
    }
    EpochMetrics m = score(engine, data, ts, epoch);
    if (!std::isfinite(m.train_mse) || !std::isfinite(m.train_mae))
      throw DivergedError(epoch, batch_no);
    result.history.push_back(m);
  }
  result.params = engine.export_params();
  // Fold the target scaling into the regression head so the exported network
  // predicts in target units directly.
  auto& head = result.params.layers.back();
  for (double& w : head.weights) w *= ts.sd;
  for (double& b : head.bias) b = b * ts.sd + ts.mean;
  return result;
}

std::vector<double> predict(const ArchitectureSpec& spec, const Parameters& params,
                            const dataset::MergedTable& table) {
  check_parameters(spec, params);
  const DesignMatrix data = design(spec, table);
  detail::Engine engine(spec);
  engine.load(params);
  std::vector<double> out;
  out.reserve(data.y.size());
  for (std::size_t i = 0; i < data.y.size(); ++i) out.push_back(engine.forward(data.row(i)));
  return out;
}

}  // namespace sleepeff::nn
