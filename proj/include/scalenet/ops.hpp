#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scalenet/rng.hpp"
#include "scalenet/tensor.hpp"

// Forward/backward kernels for the 1D residual network. All kernels are pure
// functions of their inputs plus explicit state objects; only
// batchnorm_forward in training mode mutates state (the running statistics).
namespace scalenet::ops {

enum class Mode { training, inference };

// Convolution geometry plus weights laid out [kernel, in_channels, out_channels].
// Convolutions carry no bias; each one is followed by batch normalization.
struct ConvParams {
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Tensor weights;

  // Zero-initialized weights, padding = kernel_size / 2.
  static ConvParams make(std::size_t kernel_size, std::size_t stride, std::size_t in_channels,
                         std::size_t out_channels);
  void validate() const;
};

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

// x: [batch, in_channels, length] -> [batch, out_channels, length_out].
// Cross-correlation convention (no kernel flip), zero padding.
Tensor conv1d_forward(const Tensor& x, const ConvParams& p);

struct ConvGrads {
  Tensor grad_x;
  Tensor grad_w;
};
ConvGrads conv1d_backward(const Tensor& grad_out, const Tensor& x, const ConvParams& p);

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState make(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
  void validate() const;
};

struct BatchNormCache {
  Mode mode = Mode::inference;
  Shape input_shape;
  Tensor x_hat;                // normalized input, same shape as x
  std::vector<double> inv_std;  // per channel
};

// x: [batch, channels, length] or [batch, channels]. Training mode normalizes
// with batch statistics and updates the running statistics (unbiased variance,
// exponential moving average with `momentum`); inference mode uses the
// running statistics. `cache` may be null when no backward pass follows.
Tensor batchnorm_forward(const Tensor& x, BatchNormState& s, Mode mode,
                         BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor grad_x;
  Tensor grad_gamma;
  Tensor grad_beta;
};
BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                  const BatchNormState& s);

Tensor relu(const Tensor& x);
// Passes gradient only where the forward input was strictly positive.
Tensor relu_backward(const Tensor& grad_out, const Tensor& x);

struct PoolParams {
  std::size_t kernel_size = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;
};

struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};
// Padding positions behave as -infinity.
MaxPoolResult maxpool1d_forward(const Tensor& x, const PoolParams& p);
Tensor maxpool1d_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                          const Shape& input_shape);

// [batch, channels, length] -> [batch, channels], mean over length.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, std::size_t length);

struct LinearParams {
  Tensor weight;  // [in_features, out_features]
  Tensor bias;    // [out_features]

  static LinearParams make(std::size_t in_features, std::size_t out_features);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

// x: [batch, in_features] -> [batch, out_features].
Tensor linear_forward(const Tensor& x, const LinearParams& p);

struct LinearGrads {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_b;
};
LinearGrads linear_backward(const Tensor& grad_out, const Tensor& x, const LinearParams& p);

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 0 or 1/keep_prob per element; empty in inference mode
};
// Inverted dropout: kept elements are scaled by 1/keep_prob at training time,
// inference mode is the identity.
DropoutResult dropout_forward(const Tensor& x, double keep_prob, Rng& rng, Mode mode);
Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask);

double sigmoid(double z);
Tensor sigmoid(const Tensor& logits);

// Mean binary cross-entropy over batch and labels, computed from logits in a
// numerically stable form. Targets must lie in [0, 1]; soft targets from
// mixup are accepted.
double bce_with_logits_loss(const Tensor& logits, const Tensor& targets);
Tensor bce_with_logits_backward(const Tensor& logits, const Tensor& targets);

}  // namespace scalenet::ops
