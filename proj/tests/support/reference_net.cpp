#include "reference_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ref {

namespace nn = sleepeff::nn;

Map conv(const Map& in, const std::vector<double>& w, const std::vector<double>& b, std::size_t k,
         std::size_t filters, bool relu) {
  if (in.length < k) throw std::invalid_argument("ref::conv input shorter than kernel");
  Map out{in.length - k + 1, filters, {}};
  out.v.assign(out.length * filters, 0.0);
  for (std::size_t i = 0; i < out.length; ++i) {
    for (std::size_t f = 0; f < filters; ++f) {
      double s = b[f];
      for (std::size_t c = 0; c < in.channels; ++c)
        for (std::size_t j = 0; j < k; ++j) s += w[(f * in.channels + c) * k + j] * in.at(i + j, c);
      out.v[i * filters + f] = relu ? std::max(0.0, s) : s;
    }
  }
  return out;
}

Map pool(const Map& in, std::size_t p) {
  Map out{in.length / p, in.channels, {}};
  out.v.assign(out.length * out.channels, 0.0);
  for (std::size_t t = 0; t < out.length; ++t)
    for (std::size_t c = 0; c < in.channels; ++c) {
      double m = in.at(t * p, c);
      for (std::size_t j = 1; j < p; ++j) m = std::max(m, in.at(t * p + j, c));
      out.v[t * in.channels + c] = m;
    }
  return out;
}

Map dense(const Map& in, const std::vector<double>& w, const std::vector<double>& b,
          std::size_t units, bool relu) {
  Map out{in.length, units, {}};
  out.v.assign(in.length * units, 0.0);
  for (std::size_t t = 0; t < in.length; ++t)
    for (std::size_t u = 0; u < units; ++u) {
      double s = b[u];
      for (std::size_t c = 0; c < in.channels; ++c) s += w[u * in.channels + c] * in.at(t, c);
      out.v[t * units + u] = relu ? std::max(0.0, s) : s;
    }
  return out;
}

Map flatten(const Map& in) {
  Map out{in.length * in.channels, 1, {}};
  for (std::size_t t = 0; t < in.length; ++t)
    for (std::size_t c = 0; c < in.channels; ++c) out.v.push_back(in.at(t, c));
  return out;
}

double head(const Map& in, const std::vector<double>& w, const std::vector<double>& b) {
  double s = b[0];
  for (std::size_t i = 0; i < in.v.size(); ++i) s += w[i] * in.v[i];
  return s;
}

Map input_map(std::span<const double> x) { return Map{x.size(), 1, {x.begin(), x.end()}}; }

nn::ArchitectureSpec custom_spec(std::vector<nn::LayerSpec> layers, std::size_t input_length) {
  if (layers.empty() || !std::holds_alternative<nn::RegressionHead>(layers.back()))
    layers.push_back(nn::RegressionHead{});
  nn::ArchitectureSpec spec;
  spec.id = "custom";
  spec.input_length = input_length;
  spec.layers = std::move(layers);
  spec.expected_shapes = nn::propagate_shapes(spec.layers, input_length);
  spec.expected_shapes.pop_back();
  return spec;
}

nn::Parameters random_parameters(const nn::ArchitectureSpec& spec, std::uint64_t seed,
                                 double scale) {
  nn::Parameters p = nn::zero_parameters(spec);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& layer : p.layers) {
    for (auto& w : layer.weights) w = u(rng);
    for (auto& b : layer.bias) b = u(rng);
  }
  return p;
}

namespace {

// Which piece of each piecewise-linear unit is active.
std::vector<std::uint32_t> relu_branches(const Map& out) {
  std::vector<std::uint32_t> b(out.v.size());
  for (std::size_t i = 0; i < out.v.size(); ++i) b[i] = out.v[i] > 0.0;
  return b;
}

std::vector<std::uint32_t> pool_branches(const Map& in, std::size_t p) {
  std::vector<std::uint32_t> b;
  for (std::size_t t = 0; t < in.length / p; ++t)
    for (std::size_t c = 0; c < in.channels; ++c) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < p; ++j)
        if (in.at(t * p + j, c) > in.at(t * p + best, c)) best = j;
      b.push_back(static_cast<std::uint32_t>(best));
    }
  return b;
}

}  // namespace

Trace run(const nn::ArchitectureSpec& spec, const nn::Parameters& params, const Map& input,
          std::size_t first) {
  Trace tr;
  Map cur = input;
  for (std::size_t l = first; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    const auto& p = params.layers[l];
    std::vector<std::uint32_t> branch;
    if (const auto* c = std::get_if<nn::Conv1D>(&layer)) {
      const bool relu = c->activation == nn::Activation::relu;
      cur = conv(cur, p.weights, p.bias, c->kernel_size, c->filters, relu);
      if (relu) branch = relu_branches(cur);
    } else if (const auto* m = std::get_if<nn::MaxPool>(&layer)) {
      branch = pool_branches(cur, m->pool);
      cur = pool(cur, m->pool);
    } else if (const auto* d = std::get_if<nn::Dense>(&layer)) {
      const bool relu = d->activation == nn::Activation::relu;
      cur = dense(cur, p.weights, p.bias, d->units, relu);
      if (relu) branch = relu_branches(cur);
    } else if (std::holds_alternative<nn::Flatten>(layer)) {
      cur = flatten(cur);
    } else {
      tr.prediction = head(cur, p.weights, p.bias);
      cur = Map{1, 1, {tr.prediction}};
    }
    tr.outputs.push_back(cur);
    tr.branches.push_back(std::move(branch));
  }
  return tr;
}

GradCheckStats check_gradients(const nn::ArchitectureSpec& spec, const nn::Parameters& params,
                               const std::vector<std::vector<double>>& inputs,
                               const std::vector<double>& targets, const nn::Parameters& analytic,
                               const GradCheckOptions& opt) {
  const std::size_t batch = inputs.size();
  std::vector<Map> x;
  std::vector<Trace> base;
  for (const auto& in : inputs) {
    x.push_back(input_map(in));
    base.push_back(run(spec, params, x.back()));
  }

  GradCheckStats stats;
  std::mt19937_64 rng(opt.seed);
  nn::Parameters work = params;

  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      auto& tensor = which == 0 ? work.layers[l].weights : work.layers[l].bias;
      const auto& grad = which == 0 ? analytic.layers[l].weights : analytic.layers[l].bias;
      if (tensor.empty()) continue;
      std::vector<std::size_t> entries(tensor.size());
      std::iota(entries.begin(), entries.end(), 0);
      if (opt.max_per_tensor && entries.size() > opt.max_per_tensor) {
        std::shuffle(entries.begin(), entries.end(), rng);
        entries.resize(opt.max_per_tensor);
        std::sort(entries.begin(), entries.end());
      }
      for (std::size_t e : entries) {
        const double saved = tensor[e];
        double loss[2] = {0.0, 0.0};
        bool kink = false;
        for (int side = 0; side < 2; ++side) {
          tensor[e] = saved + (side == 0 ? opt.h : -opt.h);
          for (std::size_t s = 0; s < batch; ++s) {
            const Map& from = l == 0 ? x[s] : base[s].outputs[l - 1];
            const Trace t = run(spec, work, from, l);
            for (std::size_t q = 0; q < t.branches.size() && !kink; ++q)
              kink = t.branches[q] != base[s].branches[l + q];
            const double err = t.prediction - targets[s];
            loss[side] += err * err;
          }
          loss[side] /= static_cast<double>(batch);
        }
        tensor[e] = saved;
        if (kink) {
          ++stats.kink_skipped;
          continue;
        }
        const double numeric = (loss[0] - loss[1]) / (2.0 * opt.h);
        const double a = grad[e];
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
        ++stats.checked;
        if (rel > stats.max_rel_error) {
          stats.max_rel_error = rel;
          stats.worst_layer = l;
          stats.worst_index = e;
          stats.worst_analytic = a;
          stats.worst_numeric = numeric;
        }
      }
    }
  }
  return stats;
}

}  // namespace ref
