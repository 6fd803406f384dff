#include "scalenet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "scalenet/error.hpp"

namespace scalenet::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

constexpr const char* kModule = "tensor_ops";

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(kModule, "rank",
                     std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

// Column matrix [kernel * in_channels, batch * length_out]; row k * Cin + ci
// matches the row-major [kernel, in, out] weight layout read as a
// (kernel * in) x out matrix.
RowMatrix im2col(const Tensor& x, const ConvParams& p, std::size_t length_out) {
  const std::size_t batch = x.dim(0), cin = x.dim(1), length = x.dim(2);
  const std::size_t n = batch * length_out;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(p.kernel_size * cin),
                                   static_cast<Eigen::Index>(n));
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);
  const auto stride = static_cast<std::ptrdiff_t>(p.stride);
  for (std::size_t k = 0; k < p.kernel_size; ++k) {
    // Valid output range for this tap: 0 <= j*stride - pad + k < length.
    const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(k) - pad;
    std::ptrdiff_t j_lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    std::ptrdiff_t j_hi = (static_cast<std::ptrdiff_t>(length) - 1 - offset);
    j_hi = j_hi < 0 ? -1 : std::min<std::ptrdiff_t>(j_hi / stride, length_out - 1);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      double* dst = cols.data() + (k * cin + ci) * n;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = &x.data()[(b * cin + ci) * length];
        double* row = dst + b * length_out;
        for (std::ptrdiff_t j = j_lo; j <= j_hi; ++j) row[j] = src[j * stride + offset];
      }
    }
  }
  return cols;
}

void col2im_add(const RowMatrix& cols, const ConvParams& p, Tensor& grad_x,
                std::size_t length_out) {
  const std::size_t batch = grad_x.dim(0), cin = grad_x.dim(1), length = grad_x.dim(2);
  const std::size_t n = batch * length_out;
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);
  const auto stride = static_cast<std::ptrdiff_t>(p.stride);
  for (std::size_t k = 0; k < p.kernel_size; ++k) {
    const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(k) - pad;
    std::ptrdiff_t j_lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    std::ptrdiff_t j_hi = (static_cast<std::ptrdiff_t>(length) - 1 - offset);
    j_hi = j_hi < 0 ? -1 : std::min<std::ptrdiff_t>(j_hi / stride, length_out - 1);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = cols.data() + (k * cin + ci) * n;
      for (std::size_t b = 0; b < batch; ++b) {
        double* dst = &grad_x.data()[(b * cin + ci) * length];
        const double* row = src + b * length_out;
        for (std::ptrdiff_t j = j_lo; j <= j_hi; ++j) dst[j * stride + offset] += row[j];
      }
    }
  }
}

void check_conv_input(const Tensor& x, const ConvParams& p) {
  require_rank(x, 3, "conv1d input");
  if (x.dim(1) != p.in_channels) {
    throw ShapeError(kModule, "channels",
                     "conv1d expects " + std::to_string(p.in_channels) + " input channels, got " +
                         std::to_string(x.dim(1)));
  }
  if (x.dim(2) + 2 * p.padding < p.kernel_size) {
    throw ShapeError(kModule, "length",
                     "padded length " + std::to_string(x.dim(2) + 2 * p.padding) +
                         " shorter than kernel " + std::to_string(p.kernel_size));
  }
}

}  // namespace

ConvParams ConvParams::make(std::size_t kernel_size, std::size_t stride, std::size_t in_channels,
                            std::size_t out_channels) {
  ConvParams p;
  p.kernel_size = kernel_size;
  p.stride = stride;
  p.padding = kernel_size / 2;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.weights = Tensor({kernel_size, in_channels, out_channels});
  p.validate();
  return p;
}

void ConvParams::validate() const {
  if (kernel_size == 0 || stride == 0 || in_channels == 0 || out_channels == 0) {
    throw ConfigError(kModule, "conv kernel, stride and channel counts must be positive");
  }
  const Shape expected{kernel_size, in_channels, out_channels};
  if (weights.shape() != expected) {
    throw ShapeError(kModule, "weights",
                     "expected " + shape_to_string(expected) + ", got " +
                         shape_to_string(weights.shape()));
  }
}

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (length + 2 * padding < kernel) {
    throw ShapeError(kModule, "length", "padded input shorter than window");
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

Tensor conv1d_forward(const Tensor& x, const ConvParams& p) {
  p.validate();
  check_conv_input(x, p);
  const std::size_t batch = x.dim(0);
  const std::size_t lout = conv_output_length(x.dim(2), p.kernel_size, p.stride, p.padding);
  const RowMatrix cols = im2col(x, p, lout);
  ConstRowMap w(p.weights.data().data(), static_cast<Eigen::Index>(p.kernel_size * p.in_channels),
                static_cast<Eigen::Index>(p.out_channels));
  const RowMatrix out = w.transpose() * cols;  // [Cout, batch * lout]

  Tensor y({batch, p.out_channels, lout});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < p.out_channels; ++co) {
      const double* src = out.data() + co * batch * lout + b * lout;
      std::copy(src, src + lout, &y.data()[(b * p.out_channels + co) * lout]);
    }
  }
  return y;
}

ConvGrads conv1d_backward(const Tensor& grad_out, const Tensor& x, const ConvParams& p) {
  p.validate();
  check_conv_input(x, p);
  const std::size_t batch = x.dim(0);
  const std::size_t lout = conv_output_length(x.dim(2), p.kernel_size, p.stride, p.padding);
  const Shape expected{batch, p.out_channels, lout};
  if (grad_out.shape() != expected) {
    throw ShapeError(kModule, "grad_out",
                     "expected " + shape_to_string(expected) + ", got " +
                         shape_to_string(grad_out.shape()));
  }

  RowMatrix g(static_cast<Eigen::Index>(p.out_channels), static_cast<Eigen::Index>(batch * lout));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < p.out_channels; ++co) {
      const double* src = &grad_out.data()[(b * p.out_channels + co) * lout];
      std::copy(src, src + lout, g.data() + co * batch * lout + b * lout);
    }
  }

  const RowMatrix cols = im2col(x, p, lout);
  ConstRowMap w(p.weights.data().data(), static_cast<Eigen::Index>(p.kernel_size * p.in_channels),
                static_cast<Eigen::Index>(p.out_channels));

  ConvGrads grads{Tensor::zeros_like(x), Tensor::zeros_like(p.weights)};
  RowMap gw(grads.grad_w.data().data(), w.rows(), w.cols());
  gw.noalias() = cols * g.transpose();
  const RowMatrix gcols = w * g;
  col2im_add(gcols, p, grads.grad_x, lout);
  return grads;
}

BatchNormState BatchNormState::make(std::size_t channels) {
  BatchNormState s;
  s.gamma = Tensor({channels}, 1.0);
  s.beta = Tensor({channels}, 0.0);
  s.running_mean = Tensor({channels}, 0.0);
  s.running_var = Tensor({channels}, 1.0);
  return s;
}

void BatchNormState::validate() const {
  const std::size_t c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError(kModule, "channels", "batchnorm parameter lengths disagree");
  }
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ConfigError(kModule, "batchnorm momentum must lie in (0, 1)");
  }
  if (!(epsilon >= 0.0)) throw ConfigError(kModule, "batchnorm epsilon must be non-negative");
  for (double v : running_var.data()) {
    if (!(v > 0.0)) throw NumericError(kModule, "batchnorm running variance must be positive");
  }
}

namespace {

struct ChannelLayout {
  std::size_t batch, channels, length;
};

ChannelLayout bn_layout(const Tensor& x, std::size_t channels) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeError(kModule, "rank",
                     "batchnorm input must be [batch, channels(, length)], got " +
                         shape_to_string(x.shape()));
  }
  if (x.dim(1) != channels) {
    throw ShapeError(kModule, "channels",
                     "batchnorm has " + std::to_string(channels) + " channels, input has " +
                         std::to_string(x.dim(1)));
  }
  return {x.dim(0), x.dim(1), x.rank() == 3 ? x.dim(2) : 1};
}

}  // namespace

Tensor batchnorm_forward(const Tensor& x, BatchNormState& s, Mode mode, BatchNormCache* cache) {
  s.validate();
  const auto [batch, channels, length] = bn_layout(x, s.channels());
  const std::size_t count = batch * length;
  if (mode == Mode::training && count < 2) {
    throw NumericError(kModule,
                       "degenerate variance: training-mode batchnorm needs at least 2 values per "
                       "channel (batch * length = " +
                           std::to_string(count) + ")");
  }

  Tensor y(x.shape());
  std::vector<double> inv_std(channels);
  Tensor x_hat(x.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::training) {
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = &x.data()[(b * channels + c) * length];
        for (std::size_t i = 0; i < length; ++i) sum += src[i];
      }
      mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = &x.data()[(b * channels + c) * length];
        for (std::size_t i = 0; i < length; ++i) sq += (src[i] - mean) * (src[i] - mean);
      }
      var = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      s.running_mean[c] = (1.0 - s.momentum) * s.running_mean[c] + s.momentum * mean;
      s.running_var[c] = (1.0 - s.momentum) * s.running_var[c] + s.momentum * unbiased;
      // Keep the running variance strictly positive even for constant channels.
      if (!(s.running_var[c] > 0.0)) s.running_var[c] = std::numeric_limits<double>::min();
    } else {
      mean = s.running_mean[c];
      var = s.running_var[c];
    }
    const double denom = std::sqrt(var + s.epsilon);
    if (!(denom > 0.0)) {
      throw NumericError(kModule, "degenerate variance in channel " + std::to_string(c));
    }
    inv_std[c] = 1.0 / denom;
    const double g = s.gamma[c], bta = s.beta[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels + c) * length;
      for (std::size_t i = 0; i < length; ++i) {
        const double xh = (x[off + i] - mean) * inv_std[c];
        x_hat[off + i] = xh;
        y[off + i] = g * xh + bta;
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->input_shape = x.shape();
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                  const BatchNormState& s) {
  if (grad_out.shape() != cache.input_shape) {
    throw ShapeError(kModule, "grad_out",
                     "expected " + shape_to_string(cache.input_shape) + ", got " +
                         shape_to_string(grad_out.shape()));
  }
  const auto [batch, channels, length] = bn_layout(grad_out, s.channels());
  const double count = static_cast<double>(batch * length);

  BatchNormGrads g{Tensor(grad_out.shape()), Tensor({channels}), Tensor({channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels + c) * length;
      for (std::size_t i = 0; i < length; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * cache.x_hat[off + i];
      }
    }
    g.grad_beta[c] = sum_g;
    g.grad_gamma[c] = sum_gx;
    const double scale = s.gamma[c] * cache.inv_std[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels + c) * length;
      for (std::size_t i = 0; i < length; ++i) {
        if (cache.mode == Mode::training) {
          g.grad_x[off + i] =
              scale * (grad_out[off + i] - sum_g / count - cache.x_hat[off + i] * sum_gx / count);
        } else {
          g.grad_x[off + i] = scale * grad_out[off + i];
        }
      }
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& x) {
  if (grad_out.shape() != x.shape()) {
    throw ShapeError(kModule, "grad_out", "relu gradient shape differs from input");
  }
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

MaxPoolResult maxpool1d_forward(const Tensor& x, const PoolParams& p) {
  require_rank(x, 3, "maxpool input");
  const std::size_t batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
  if (p.kernel_size == 0 || p.stride == 0) {
    throw ConfigError(kModule, "pool kernel and stride must be positive");
  }
  if (p.kernel_size > length + 2 * p.padding) {
    throw ShapeError(kModule, "length",
                     "pool kernel " + std::to_string(p.kernel_size) +
                         " larger than padded input " + std::to_string(length + 2 * p.padding));
  }
  if (p.padding >= p.kernel_size) {
    throw ConfigError(kModule, "pool padding must be smaller than the kernel");
  }
  const std::size_t lout = conv_output_length(length, p.kernel_size, p.stride, p.padding);
  MaxPoolResult r{Tensor({batch, channels, lout}), std::vector<std::size_t>(batch * channels * lout)};
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t in_off = bc * length;
    for (std::size_t o = 0; o < lout; ++o) {
      const std::ptrdiff_t start =
          static_cast<std::ptrdiff_t>(o * p.stride) - static_cast<std::ptrdiff_t>(p.padding);
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_idx = 0;
      bool found = false;
      for (std::size_t k = 0; k < p.kernel_size; ++k) {
        const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(k);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) continue;
        const double v = x[in_off + static_cast<std::size_t>(pos)];
        if (!found || v > best) {
          found = true;
          best = v;
          best_idx = in_off + static_cast<std::size_t>(pos);
        }
      }
      r.output[bc * lout + o] = best;
      r.argmax[bc * lout + o] = best_idx;
    }
  }
  return r;
}

Tensor maxpool1d_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                          const Shape& input_shape) {
  if (grad_out.size() != argmax.size()) {
    throw ShapeError(kModule, "grad_out", "maxpool gradient does not match cached argmax");
  }
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 3, "global_avg_pool input");
  const std::size_t batch = x.dim(0), channels = x.dim(1), length = x.dim(2);
  Tensor y({batch, channels});
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    double sum = 0.0;
    for (std::size_t i = 0; i < length; ++i) sum += x[bc * length + i];
    y[bc] = sum / static_cast<double>(length);
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, std::size_t length) {
  require_rank(grad_out, 2, "global_avg_pool gradient");
  const std::size_t batch = grad_out.dim(0), channels = grad_out.dim(1);
  Tensor g({batch, channels, length});
  const double inv = 1.0 / static_cast<double>(length);
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    for (std::size_t i = 0; i < length; ++i) g[bc * length + i] = grad_out[bc] * inv;
  }
  return g;
}

LinearParams LinearParams::make(std::size_t in_features, std::size_t out_features) {
  return LinearParams{Tensor({in_features, out_features}), Tensor({out_features})};
}

Tensor linear_forward(const Tensor& x, const LinearParams& p) {
  require_rank(x, 2, "linear input");
  if (x.dim(1) != p.in_features()) {
    throw ShapeError(kModule, "features",
                     "linear expects " + std::to_string(p.in_features()) + " features, got " +
                         std::to_string(x.dim(1)));
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto nin = static_cast<Eigen::Index>(p.in_features());
  const auto nout = static_cast<Eigen::Index>(p.out_features());
  Tensor y({x.dim(0), p.out_features()});
  RowMap ym(y.data().data(), batch, nout);
  ym.noalias() = ConstRowMap(x.data().data(), batch, nin) * ConstRowMap(p.weight.data().data(), nin, nout);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index o = 0; o < nout; ++o) ym(b, o) += p.bias[static_cast<std::size_t>(o)];
  }
  return y;
}

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& x, const LinearParams& p) {
  require_rank(x, 2, "linear input");
  const Shape expected{x.dim(0), p.out_features()};
  if (grad_out.shape() != expected) {
    throw ShapeError(kModule, "grad_out",
                     "expected " + shape_to_string(expected) + ", got " +
                         shape_to_string(grad_out.shape()));
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto nin = static_cast<Eigen::Index>(p.in_features());
  const auto nout = static_cast<Eigen::Index>(p.out_features());
  ConstRowMap g(grad_out.data().data(), batch, nout);
  ConstRowMap xm(x.data().data(), batch, nin);
  ConstRowMap w(p.weight.data().data(), nin, nout);

  LinearGrads r{Tensor(x.shape()), Tensor(p.weight.shape()), Tensor(p.bias.shape())};
  RowMap(r.grad_x.data().data(), batch, nin).noalias() = g * w.transpose();
  RowMap(r.grad_w.data().data(), nin, nout).noalias() = xm.transpose() * g;
  for (Eigen::Index o = 0; o < nout; ++o) r.grad_b[static_cast<std::size_t>(o)] = g.col(o).sum();
  return r;
}

DropoutResult dropout_forward(const Tensor& x, double keep_prob, Rng& rng, Mode mode) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError(kModule, "dropout keep probability must lie in (0, 1]");
  }
  if (mode == Mode::inference || keep_prob == 1.0) return {x, Tensor()};
  DropoutResult r{Tensor(x.shape()), Tensor(x.shape())};
  const double scale = 1.0 / keep_prob;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng.uniform() < keep_prob ? scale : 0.0;
    r.mask[i] = m;
    r.output[i] = x[i] * m;
  }
  return r;
}

Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask) {
  if (mask.empty()) return grad_out;
  if (mask.shape() != grad_out.shape()) {
    throw ShapeError(kModule, "grad_out", "dropout gradient shape differs from mask");
  }
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& logits) {
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

namespace {

void check_targets(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError(kModule, "targets",
                     "logits " + shape_to_string(logits.shape()) + " vs targets " +
                         shape_to_string(targets.shape()));
  }
  for (double t : targets.data()) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ValidationError(kModule, "target value " + std::to_string(t) + " outside [0, 1]");
    }
  }
}

}  // namespace

double bce_with_logits_loss(const Tensor& logits, const Tensor& targets) {
  check_targets(logits, targets);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    sum += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return sum / static_cast<double>(logits.size());
}

Tensor bce_with_logits_backward(const Tensor& logits, const Tensor& targets) {
  check_targets(logits, targets);
  Tensor g(logits.shape());
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (sigmoid(logits[i]) - targets[i]) * inv;
  return g;
}

}  // namespace scalenet::ops
