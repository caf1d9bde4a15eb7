#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sleepeff/neuralnet.hpp"

namespace sleepeff::nn::detail {

// Kernels work on row-major (positions x channels) buffers. Weights are kept
// transposed so the innermost loop runs over contiguous output channels:
//   conv:  wt[(j * C + c) * F + f] == weights[f, c, j]
//   dense: wt[c * U + u]           == weights[u, c]

void conv_forward(const double* in, std::size_t length, std::size_t channels, const double* wt,
                  const double* bias, std::size_t kernel, std::size_t filters, Activation act,
                  double* out);
void pool_forward(const double* in, std::size_t length, std::size_t channels, std::size_t pool,
                  double* out, std::uint32_t* argmax);
void dense_forward(const double* in, std::size_t length, std::size_t channels, const double* wt,
                   const double* bias, std::size_t units, Activation act, double* out);

std::vector<double> transpose_conv(std::span<const double> weights, std::size_t filters,
                                   std::size_t channels, std::size_t kernel);
std::vector<double> untranspose_conv(std::span<const double> wt, std::size_t filters,
                                     std::size_t channels, std::size_t kernel);
std::vector<double> transpose_dense(std::span<const double> weights, std::size_t units,
                                    std::size_t channels);
std::vector<double> untranspose_dense(std::span<const double> wt, std::size_t units,
                                      std::size_t channels);

// Single-sample forward/backward over one architecture with gradient
// accumulation. Parameters live in kernel layout between load() and
// export_params(); optimizers update them in place through tensors().
class Engine {
 public:
  explicit Engine(const ArchitectureSpec& spec);

  void load(const Parameters& params);
  Parameters export_params() const;
  Parameters export_gradients() const;

  double forward(const double* input);
  // Accumulates d(loss)/d(params) given d(loss)/d(prediction) for the sample
  // last passed to forward().
  void backward(double dprediction);
  void zero_grad();

  // Output of layer l for the last forward() (layer 0 = first layer).
  std::span<const double> output(std::size_t l) const;

  // Parallel views of every parameter and gradient buffer, in kernel layout.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<double>> gradient_tensors();

 private:
  enum class Kind { conv, pool, dense, flatten, head };
  struct Layer {
    Kind kind;
    Shape in;
    Shape out;
    std::size_t window = 0;  // kernel or pool size
    Activation act = Activation::linear;
    std::vector<double> wt, bias;
    std::vector<double> gwt, gbias;
  };

  const double* layer_input(std::size_t l) const;

  std::vector<Layer> layers_;
  const double* input_ = nullptr;
  std::vector<std::vector<double>> out_;
  std::vector<std::vector<std::uint32_t>> argmax_;
  std::vector<std::vector<double>> gout_;
  std::vector<double> gin_scratch_;
};

}  // namespace sleepeff::nn::detail
