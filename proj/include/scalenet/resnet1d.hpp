#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scalenet/network_spec.hpp"
#include "scalenet/ops.hpp"
#include "scalenet/rng.hpp"
#include "scalenet/tensor.hpp"

namespace scalenet::net {

// A learnable tensor and its gradient slot. `kind` is the layer type used in
// gradient-check reports ("conv", "batchnorm", "linear").
struct Parameter {
  std::string name;
  std::string kind;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

struct NamedTensor {
  std::string name;
  Tensor* value = nullptr;
};

// The residual network family:
//   logits = FC(dropout(GAP(R4(R3(R2(R1(stem(x))))))))
// stem = maxpool(relu(BN(conv(x)))); each residual layer is
//   relu(BN(conv(relu(BN(conv(x))))) + shortcut(x)).
// Single-writer: forward in training mode caches activations and updates BN
// running statistics.
class ResNet1d {
 public:
  ResNet1d(const NetworkSpec& spec, std::uint64_t seed, double dropout_rate = 0.0);

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double dropout_rate() const noexcept { return dropout_rate_; }
  void set_dropout_rate(double rate);

  // x: [batch, 12, length] -> logits [batch, num_labels]. Training mode
  // requires `dropout_rng` when the dropout rate is positive.
  Tensor forward(const Tensor& x, ops::Mode mode, Rng* dropout_rng = nullptr);
  // Output of R4 after its final activation: [batch, 8C, length / 64].
  Tensor features(const Tensor& x, ops::Mode mode = ops::Mode::inference);

  // Gradients of all parameters (and of the input) from dLoss/dlogits. Must
  // follow a training-mode forward. Gradients are overwritten, not summed.
  void backward(const Tensor& grad_logits);
  const Tensor& input_grad() const noexcept { return input_grad_; }

  std::vector<Parameter> parameters();
  // Parameters followed by BN running statistics, in checkpoint order.
  std::vector<NamedTensor> state();
  std::vector<std::pair<std::string, const Tensor*>> state() const;

  void zero_grad();
  // Drops activations cached by the last training-mode forward.
  void release_cache();
  // Sets every convolution and FC weight to `value`, BN to identity
  // statistics and FC bias to zero.
  void fill_weights(double value);

 private:
  struct ConvBn {
    ops::ConvParams conv;
    ops::BatchNormState bn;
    Tensor grad_w, grad_gamma, grad_beta;
    Tensor input;
    Tensor bn_out;
    ops::BatchNormCache bn_cache;
  };

  struct Residual {
    LayerSpec spec;
    ConvBn first, second;
    std::optional<ops::ConvParams> shortcut_conv;
    Tensor shortcut_grad_w;
    Tensor input;
    Tensor shortcut_conv_out;
    std::vector<std::size_t> shortcut_argmax;
    Tensor sum;
  };

  Tensor conv_bn_forward(ConvBn& u, const Tensor& x, ops::Mode mode, bool keep);
  Tensor conv_bn_backward(ConvBn& u, const Tensor& grad_bn_out);
  Tensor residual_forward(Residual& r, const Tensor& x, ops::Mode mode, bool keep);
  Tensor residual_backward(Residual& r, const Tensor& grad_out);
  Tensor trunk_forward(const Tensor& x, ops::Mode mode, bool keep);
  void initialize();
  template <typename F>
  void visit_state(F&& f);

  NetworkSpec spec_;
  std::uint64_t seed_ = 0;
  double dropout_rate_ = 0.0;

  ConvBn stem_;
  std::vector<std::size_t> stem_argmax_;
  Shape stem_pool_input_shape_;
  std::vector<Residual> layers_;
  ops::LinearParams fc_;
  Tensor fc_grad_w_, fc_grad_b_;

  bool cached_ = false;
  Shape features_shape_;
  Tensor gap_out_;
  Tensor dropout_mask_;
  Tensor fc_input_;
  Tensor input_grad_;
};

void save_checkpoint(const ResNet1d& model, const std::string& path);
ResNet1d load_checkpoint(const std::string& path);

}  // namespace scalenet::net
