#include "engine.hpp"

#include <algorithm>
#include <cassert>

#include "sleepeff/errors.hpp"

namespace sleepeff::nn::detail {

void conv_forward(const double* in, std::size_t length, std::size_t channels, const double* wt,
                  const double* bias, std::size_t kernel, std::size_t filters, Activation act,
                  double* out) {
  const std::size_t out_len = length - kernel + 1;
  const std::size_t row = channels * filters;
  for (std::size_t i = 0; i < out_len; ++i) {
    double* o = out + i * filters;
    std::copy(bias, bias + filters, o);
    for (std::size_t j = 0; j < kernel; ++j) {
      const double* x = in + (i + j) * channels;
      const double* w = wt + j * row;
      for (std::size_t c = 0; c < channels; ++c) {
        const double xv = x[c];
        if (xv == 0.0) continue;
        const double* wr = w + c * filters;
        for (std::size_t f = 0; f < filters; ++f) o[f] += xv * wr[f];
      }
    }
    if (act == Activation::relu)
      for (std::size_t f = 0; f < filters; ++f) o[f] = o[f] > 0.0 ? o[f] : 0.0;
  }
}

void pool_forward(const double* in, std::size_t length, std::size_t channels, std::size_t pool,
                  double* out, std::uint32_t* argmax) {
  const std::size_t out_len = length / pool;
  for (std::size_t i = 0; i < out_len; ++i) {
    const std::size_t start = i * pool;
    for (std::size_t c = 0; c < channels; ++c) {
      double best = in[start * channels + c];
      std::size_t at = start;
      for (std::size_t q = 1; q < pool; ++q) {
        const double v = in[(start + q) * channels + c];
        if (v > best) {
          best = v;
          at = start + q;
        }
      }
      out[i * channels + c] = best;
      argmax[i * channels + c] = static_cast<std::uint32_t>(at);
    }
  }
}

void dense_forward(const double* in, std::size_t length, std::size_t channels, const double* wt,
                   const double* bias, std::size_t units, Activation act, double* out) {
  for (std::size_t t = 0; t < length; ++t) {
    double* o = out + t * units;
    std::copy(bias, bias + units, o);
    const double* x = in + t * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      const double xv = x[c];
      if (xv == 0.0) continue;
      const double* wr = wt + c * units;
      for (std::size_t u = 0; u < units; ++u) o[u] += xv * wr[u];
    }
    if (act == Activation::relu)
      for (std::size_t u = 0; u < units; ++u) o[u] = o[u] > 0.0 ? o[u] : 0.0;
  }
}

std::vector<double> transpose_conv(std::span<const double> weights, std::size_t filters,
                                   std::size_t channels, std::size_t kernel) {
  std::vector<double> wt(weights.size());
  for (std::size_t f = 0; f < filters; ++f)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t j = 0; j < kernel; ++j)
        wt[(j * channels + c) * filters + f] = weights[(f * channels + c) * kernel + j];
  return wt;
}

std::vector<double> untranspose_conv(std::span<const double> wt, std::size_t filters,
                                     std::size_t channels, std::size_t kernel) {
  std::vector<double> w(wt.size());
  for (std::size_t f = 0; f < filters; ++f)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t j = 0; j < kernel; ++j)
        w[(f * channels + c) * kernel + j] = wt[(j * channels + c) * filters + f];
  return w;
}

std::vector<double> transpose_dense(std::span<const double> weights, std::size_t units,
                                    std::size_t channels) {
  std::vector<double> wt(weights.size());
  for (std::size_t u = 0; u < units; ++u)
    for (std::size_t c = 0; c < channels; ++c) wt[c * units + u] = weights[u * channels + c];
  return wt;
}

std::vector<double> untranspose_dense(std::span<const double> wt, std::size_t units,
                                      std::size_t channels) {
  std::vector<double> w(wt.size());
  for (std::size_t u = 0; u < units; ++u)
    for (std::size_t c = 0; c < channels; ++c) w[u * channels + c] = wt[c * units + u];
  return w;
}

Engine::Engine(const ArchitectureSpec& spec) {
  const auto shapes = propagate_shapes(spec.layers, spec.input_length);
  Shape in{spec.input_length, 1, false};
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    Layer layer{};
    layer.in = in;
    layer.out = shapes[l];
    if (const auto* c = std::get_if<Conv1D>(&spec.layers[l])) {
      layer.kind = Kind::conv;
      layer.window = c->kernel_size;
      layer.act = c->activation;
    } else if (const auto* p = std::get_if<MaxPool>(&spec.layers[l])) {
      layer.kind = Kind::pool;
      layer.window = p->pool;
    } else if (const auto* d = std::get_if<Dense>(&spec.layers[l])) {
      layer.kind = Kind::dense;
      layer.act = d->activation;
    } else if (std::holds_alternative<Flatten>(spec.layers[l])) {
      layer.kind = Kind::flatten;
    } else {
      layer.kind = Kind::head;
    }
    layers_.push_back(std::move(layer));
    in = shapes[l];
  }
  load(zero_parameters(spec));
  out_.resize(layers_.size());
  gout_.resize(layers_.size());
  argmax_.resize(layers_.size());
  std::size_t widest = spec.input_length;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    out_[l].assign(layers_[l].out.size(), 0.0);
    gout_[l].assign(layers_[l].out.size(), 0.0);
    if (layers_[l].kind == Kind::pool) argmax_[l].assign(layers_[l].out.size(), 0);
    widest = std::max(widest, layers_[l].in.size());
  }
  gin_scratch_.assign(widest, 0.0);
}

void Engine::load(const Parameters& params) {
  if (params.layers.size() != layers_.size()) throw ShapeError("parameter/layer count mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& L = layers_[l];
    const LayerParams& p = params.layers[l];
    switch (L.kind) {
      case Kind::conv:
        L.wt = transpose_conv(p.weights, L.out.channels, L.in.channels, L.window);
        break;
      case Kind::dense:
        L.wt = transpose_dense(p.weights, L.out.channels, L.in.channels);
        break;
      case Kind::head:
        L.wt = p.weights;
        break;
      default:
        L.wt.clear();
    }
    L.bias = p.bias;
    L.gwt.assign(L.wt.size(), 0.0);
    L.gbias.assign(L.bias.size(), 0.0);
  }
}

Parameters Engine::export_params() const {
  Parameters p;
  for (const Layer& L : layers_) {
    LayerParams lp;
    switch (L.kind) {
      case Kind::conv:
        lp.weights = untranspose_conv(L.wt, L.out.channels, L.in.channels, L.window);
        break;
      case Kind::dense:
        lp.weights = untranspose_dense(L.wt, L.out.channels, L.in.channels);
        break;
      default:
        lp.weights = L.wt;
    }
    lp.bias = L.bias;
    p.layers.push_back(std::move(lp));
  }
  return p;
}

Parameters Engine::export_gradients() const {
  Parameters g;
  for (const Layer& L : layers_) {
    LayerParams lp;
    switch (L.kind) {
      case Kind::conv:
        lp.weights = untranspose_conv(L.gwt, L.out.channels, L.in.channels, L.window);
        break;
      case Kind::dense:
        lp.weights = untranspose_dense(L.gwt, L.out.channels, L.in.channels);
        break;
      default:
        lp.weights = L.gwt;
    }
    lp.bias = L.gbias;
    g.layers.push_back(std::move(lp));
  }
  return g;
}

const double* Engine::layer_input(std::size_t l) const {
  return l == 0 ? input_ : out_[l - 1].data();
}

std::span<const double> Engine::output(std::size_t l) const { return out_.at(l); }

double Engine::forward(const double* input) {
  input_ = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    const double* in = layer_input(l);
    double* out = out_[l].data();
    switch (L.kind) {
      case Kind::conv:
        conv_forward(in, L.in.length, L.in.channels, L.wt.data(), L.bias.data(), L.window,
                     L.out.channels, L.act, out);
        break;
      case Kind::pool:
        pool_forward(in, L.in.length, L.in.channels, L.window, out, argmax_[l].data());
        break;
      case Kind::dense:
        dense_forward(in, L.in.length, L.in.channels, L.wt.data(), L.bias.data(), L.out.channels,
                      L.act, out);
        break;
      case Kind::flatten:
        std::copy(in, in + L.in.size(), out);
        break;
      case Kind::head: {
        double acc = L.bias[0];
        const std::size_t n = L.in.size();
        for (std::size_t i = 0; i < n; ++i) acc += L.wt[i] * in[i];
        out[0] = acc;
        break;
      }
    }
  }
  return out_.back()[0];
}

void Engine::backward(double dprediction) {
  gout_.back()[0] = dprediction;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Layer& L = layers_[l];
    const double* in = layer_input(l);
    double* g = gout_[l].data();
    const bool need_gin = l > 0;
    double* gin = need_gin ? gout_[l - 1].data() : nullptr;

    switch (L.kind) {
      case Kind::head: {
        const double gv = g[0];
        L.gbias[0] += gv;
        const std::size_t n = L.in.size();
        for (std::size_t i = 0; i < n; ++i) L.gwt[i] += gv * in[i];
        if (need_gin)
          for (std::size_t i = 0; i < n; ++i) gin[i] = gv * L.wt[i];
        break;
      }
      case Kind::flatten:
        if (need_gin) std::copy(g, g + L.out.size(), gin);
        break;
      case Kind::pool: {
        if (!need_gin) break;
        std::fill(gin, gin + L.in.size(), 0.0);
        const std::size_t C = L.in.channels;
        const std::uint32_t* am = argmax_[l].data();
        for (std::size_t i = 0; i < L.out.length; ++i)
          for (std::size_t c = 0; c < C; ++c) gin[am[i * C + c] * C + c] += g[i * C + c];
        break;
      }
      case Kind::dense: {
        const std::size_t U = L.out.channels, C = L.in.channels;
        const double* out = out_[l].data();
        if (L.act == Activation::relu)
          for (std::size_t i = 0; i < L.out.size(); ++i)
            if (!(out[i] > 0.0)) g[i] = 0.0;
        for (std::size_t t = 0; t < L.out.length; ++t) {
          const double* gt = g + t * U;
          for (std::size_t u = 0; u < U; ++u) L.gbias[u] += gt[u];
          const double* x = in + t * C;
          for (std::size_t c = 0; c < C; ++c) {
            const double xv = x[c];
            double* gw = L.gwt.data() + c * U;
            for (std::size_t u = 0; u < U; ++u) gw[u] += xv * gt[u];
            if (need_gin) {
              const double* wr = L.wt.data() + c * U;
              double acc = 0.0;
              for (std::size_t u = 0; u < U; ++u) acc += wr[u] * gt[u];
              gin[t * C + c] = acc;
            }
          }
        }
        break;
      }
      case Kind::conv: {
        const std::size_t F = L.out.channels, C = L.in.channels, K = L.window;
        const double* out = out_[l].data();
        if (L.act == Activation::relu)
          for (std::size_t i = 0; i < L.out.size(); ++i)
            if (!(out[i] > 0.0)) g[i] = 0.0;
        if (need_gin) std::fill(gin, gin + L.in.size(), 0.0);
        for (std::size_t i = 0; i < L.out.length; ++i) {
          const double* gi = g + i * F;
          bool any = false;
          for (std::size_t f = 0; f < F; ++f) {
            L.gbias[f] += gi[f];
            any = any || gi[f] != 0.0;
          }
          if (!any) continue;
          for (std::size_t j = 0; j < K; ++j) {
            const double* x = in + (i + j) * C;
            double* gw_row = L.gwt.data() + j * C * F;
            const double* w_row = L.wt.data() + j * C * F;
            for (std::size_t c = 0; c < C; ++c) {
              const double xv = x[c];
              if (xv != 0.0) {
                double* gw = gw_row + c * F;
                for (std::size_t f = 0; f < F; ++f) gw[f] += xv * gi[f];
              }
              if (need_gin) {
                const double* wr = w_row + c * F;
                double acc = 0.0;
                for (std::size_t f = 0; f < F; ++f) acc += wr[f] * gi[f];
                gin[(i + j) * C + c] += acc;
              }
            }
          }
        }
        break;
      }
    }
  }
}

void Engine::zero_grad() {
  for (Layer& L : layers_) {
    std::fill(L.gwt.begin(), L.gwt.end(), 0.0);
    std::fill(L.gbias.begin(), L.gbias.end(), 0.0);
  }
}

std::vector<std::span<double>> Engine::tensors() {
  std::vector<std::span<double>> t;
  for (Layer& L : layers_) {
    if (!L.wt.empty()) t.emplace_back(L.wt);
    if (!L.bias.empty()) t.emplace_back(L.bias);
  }
  return t;
}

std::vector<std::span<double>> Engine::gradient_tensors() {
  std::vector<std::span<double>> t;
  for (Layer& L : layers_) {
    if (!L.wt.empty()) t.emplace_back(L.gwt);
    if (!L.bias.empty()) t.emplace_back(L.gbias);
  }
  return t;
}

}  // namespace sleepeff::nn::detail
