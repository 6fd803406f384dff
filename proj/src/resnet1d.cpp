#include "scalenet/resnet1d.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "scalenet/error.hpp"

namespace scalenet::net {

namespace {

constexpr const char* kModule = "resnet1d";

void kaiming_normal(Tensor& w, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = rng.normal(0.0, stddev);
}

}  // namespace

ResNet1d::ResNet1d(const NetworkSpec& spec, std::uint64_t seed, double dropout_rate)
    : spec_(spec), seed_(seed) {
  set_dropout_rate(dropout_rate);
  const std::size_t k = static_cast<std::size_t>(spec_.scale.kernel);
  stem_.conv = ops::ConvParams::make(k, static_cast<std::size_t>(spec_.stem.conv.stride),
                                     static_cast<std::size_t>(spec_.stem.in_channels),
                                     static_cast<std::size_t>(spec_.stem.out_channels));
  stem_.bn = ops::BatchNormState::make(static_cast<std::size_t>(spec_.stem.out_channels));

  for (const auto& block : spec_.blocks) {
    for (const auto& l : block) {
      Residual r;
      r.spec = l;
      const auto in = static_cast<std::size_t>(l.in_channels);
      const auto out = static_cast<std::size_t>(l.out_channels);
      r.first.conv = ops::ConvParams::make(k, static_cast<std::size_t>(l.stride), in, out);
      r.first.bn = ops::BatchNormState::make(out);
      r.second.conv = ops::ConvParams::make(k, 1, out, out);
      r.second.bn = ops::BatchNormState::make(out);
      if (l.shortcut == ShortcutKind::pool_conv) r.shortcut_conv = ops::ConvParams::make(1, 1, in, out);
      layers_.push_back(std::move(r));
    }
  }
  fc_ = ops::LinearParams::make(static_cast<std::size_t>(spec_.head.in_features),
                                static_cast<std::size_t>(spec_.head.num_labels));
  initialize();
  zero_grad();
}

void ResNet1d::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError(kModule, "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  dropout_rate_ = rate;
}

void ResNet1d::initialize() {
  Rng rng = Rng::stream(seed_, "init");
  kaiming_normal(stem_.conv.weights, stem_.conv.kernel_size * stem_.conv.in_channels, rng);
  for (auto& r : layers_) {
    kaiming_normal(r.first.conv.weights, r.first.conv.kernel_size * r.first.conv.in_channels, rng);
    kaiming_normal(r.second.conv.weights, r.second.conv.kernel_size * r.second.conv.in_channels, rng);
    if (r.shortcut_conv) kaiming_normal(r.shortcut_conv->weights, r.shortcut_conv->in_channels, rng);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fc_.in_features()));
  for (auto& v : fc_.weight.data()) v = rng.uniform(-bound, bound);
  fc_.bias.fill(0.0);
}

void ResNet1d::fill_weights(double value) {
  auto reset_bn = [](ops::BatchNormState& bn) { bn = ops::BatchNormState::make(bn.channels()); };
  stem_.conv.weights.fill(value);
  reset_bn(stem_.bn);
  for (auto& r : layers_) {
    r.first.conv.weights.fill(value);
    r.second.conv.weights.fill(value);
    reset_bn(r.first.bn);
    reset_bn(r.second.bn);
    if (r.shortcut_conv) r.shortcut_conv->weights.fill(value);
  }
  fc_.weight.fill(value);
  fc_.bias.fill(0.0);
}

Tensor ResNet1d::conv_bn_forward(ConvBn& u, const Tensor& x, ops::Mode mode, bool keep) {
  Tensor conv_out = ops::conv1d_forward(x, u.conv);
  Tensor bn_out = ops::batchnorm_forward(conv_out, u.bn, mode, keep ? &u.bn_cache : nullptr);
  if (keep) u.input = x;
  return bn_out;
}

Tensor ResNet1d::conv_bn_backward(ConvBn& u, const Tensor& grad_bn_out) {
  auto bn = ops::batchnorm_backward(grad_bn_out, u.bn_cache, u.bn);
  u.grad_gamma = std::move(bn.grad_gamma);
  u.grad_beta = std::move(bn.grad_beta);
  auto conv = ops::conv1d_backward(bn.grad_x, u.input, u.conv);
  u.grad_w = std::move(conv.grad_w);
  return std::move(conv.grad_x);
}

Tensor ResNet1d::residual_forward(Residual& r, const Tensor& x, ops::Mode mode, bool keep) {
  Tensor h = conv_bn_forward(r.first, x, mode, keep);
  if (keep) r.first.bn_out = h;
  h = ops::relu(h);
  Tensor sum = conv_bn_forward(r.second, h, mode, keep);

  switch (r.spec.shortcut) {
    case ShortcutKind::identity:
      sum += x;
      break;
    case ShortcutKind::pool_only: {
      auto pooled = ops::maxpool1d_forward(x, ops::PoolParams{3, 2, 1});
      sum += pooled.output;
      if (keep) r.shortcut_argmax = std::move(pooled.argmax);
      break;
    }
    case ShortcutKind::pool_conv: {
      Tensor projected = ops::conv1d_forward(x, *r.shortcut_conv);
      auto pooled = ops::maxpool1d_forward(projected, ops::PoolParams{3, 2, 1});
      sum += pooled.output;
      if (keep) {
        r.shortcut_argmax = std::move(pooled.argmax);
        r.shortcut_conv_out = std::move(projected);
      }
      break;
    }
  }
  if (keep) {
    r.input = x;
    r.sum = sum;
  }
  return ops::relu(sum);
}

Tensor ResNet1d::residual_backward(Residual& r, const Tensor& grad_out) {
  const Tensor g_sum = ops::relu_backward(grad_out, r.sum);
  Tensor g_h = conv_bn_backward(r.second, g_sum);
  g_h = ops::relu_backward(g_h, r.first.bn_out);
  Tensor g_x = conv_bn_backward(r.first, g_h);

  switch (r.spec.shortcut) {
    case ShortcutKind::identity:
      g_x += g_sum;
      break;
    case ShortcutKind::pool_only:
      g_x += ops::maxpool1d_backward(g_sum, r.shortcut_argmax, r.input.shape());
      break;
    case ShortcutKind::pool_conv: {
      const Tensor g_proj =
          ops::maxpool1d_backward(g_sum, r.shortcut_argmax, r.shortcut_conv_out.shape());
      auto conv = ops::conv1d_backward(g_proj, r.input, *r.shortcut_conv);
      r.shortcut_grad_w = std::move(conv.grad_w);
      g_x += conv.grad_x;
      break;
    }
  }
  return g_x;
}

Tensor ResNet1d::trunk_forward(const Tensor& x, ops::Mode mode, bool keep) {
  if (x.rank() != 3) {
    throw ShapeError(kModule, "rank", "model input must be [batch, leads, length], got " +
                                          shape_to_string(x.shape()));
  }
  if (x.dim(1) != static_cast<std::size_t>(spec_.stem.in_channels)) {
    throw ShapeError(kModule, "channels",
                     "model expects " + std::to_string(spec_.stem.in_channels) +
                         " input leads, got " + std::to_string(x.dim(1)));
  }
  Tensor h = conv_bn_forward(stem_, x, mode, keep);
  if (keep) stem_.bn_out = h;
  h = ops::relu(h);
  const auto& pw = spec_.stem.pool;
  auto pooled = ops::maxpool1d_forward(
      h, ops::PoolParams{static_cast<std::size_t>(pw.kernel), static_cast<std::size_t>(pw.stride),
                         static_cast<std::size_t>(pw.padding)});
  if (keep) {
    stem_argmax_ = std::move(pooled.argmax);
    stem_pool_input_shape_ = h.shape();
  }
  h = std::move(pooled.output);
  for (auto& r : layers_) h = residual_forward(r, h, mode, keep);
  return h;
}

Tensor ResNet1d::features(const Tensor& x, ops::Mode mode) {
  cached_ = false;
  return trunk_forward(x, mode, false);
}

Tensor ResNet1d::forward(const Tensor& x, ops::Mode mode, Rng* dropout_rng) {
  const bool keep = mode == ops::Mode::training;
  const Tensor feats = trunk_forward(x, mode, keep);
  Tensor pooled = ops::global_avg_pool(feats);
  Tensor mask;
  if (mode == ops::Mode::training && dropout_rate_ > 0.0) {
    if (!dropout_rng) throw ConfigError(kModule, "training with dropout needs an RNG stream");
    auto d = ops::dropout_forward(pooled, 1.0 - dropout_rate_, *dropout_rng, mode);
    pooled = std::move(d.output);
    mask = std::move(d.mask);
  }
  Tensor logits = ops::linear_forward(pooled, fc_);
  cached_ = keep;
  if (keep) {
    features_shape_ = feats.shape();
    dropout_mask_ = std::move(mask);
    fc_input_ = std::move(pooled);
  }
  return logits;
}

void ResNet1d::backward(const Tensor& grad_logits) {
  if (!cached_) {
    throw ConfigError(kModule, "backward requires a preceding training-mode forward");
  }
  auto fc = ops::linear_backward(grad_logits, fc_input_, fc_);
  fc_grad_w_ = std::move(fc.grad_w);
  fc_grad_b_ = std::move(fc.grad_b);
  Tensor g = ops::dropout_backward(fc.grad_x, dropout_mask_);
  g = ops::global_avg_pool_backward(g, features_shape_[2]);
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = residual_backward(*it, g);
  g = ops::maxpool1d_backward(g, stem_argmax_, stem_pool_input_shape_);
  g = ops::relu_backward(g, stem_.bn_out);
  input_grad_ = conv_bn_backward(stem_, g);
}

void ResNet1d::zero_grad() {
  auto zero_unit = [](ConvBn& u) {
    u.grad_w = Tensor::zeros_like(u.conv.weights);
    u.grad_gamma = Tensor::zeros_like(u.bn.gamma);
    u.grad_beta = Tensor::zeros_like(u.bn.beta);
  };
  zero_unit(stem_);
  for (auto& r : layers_) {
    zero_unit(r.first);
    zero_unit(r.second);
    if (r.shortcut_conv) r.shortcut_grad_w = Tensor::zeros_like(r.shortcut_conv->weights);
  }
  fc_grad_w_ = Tensor::zeros_like(fc_.weight);
  fc_grad_b_ = Tensor::zeros_like(fc_.bias);
}

void ResNet1d::release_cache() {
  auto clear_unit = [](ConvBn& u) {
    u.input = Tensor();
    u.bn_out = Tensor();
    u.bn_cache = ops::BatchNormCache{};
  };
  clear_unit(stem_);
  stem_argmax_.clear();
  for (auto& r : layers_) {
    clear_unit(r.first);
    clear_unit(r.second);
    r.input = Tensor();
    r.shortcut_conv_out = Tensor();
    r.shortcut_argmax.clear();
    r.sum = Tensor();
  }
  dropout_mask_ = Tensor();
  fc_input_ = Tensor();
  input_grad_ = Tensor();
  cached_ = false;
}

std::vector<Parameter> ResNet1d::parameters() {
  std::vector<Parameter> params;
  auto unit = [&](const std::string& prefix, ConvBn& u, const std::string& conv_name,
                  const std::string& bn_name) {
    params.push_back({prefix + conv_name + ".weight", "conv", &u.conv.weights, &u.grad_w});
    params.push_back({prefix + bn_name + ".gamma", "batchnorm", &u.bn.gamma, &u.grad_gamma});
    params.push_back({prefix + bn_name + ".beta", "batchnorm", &u.bn.beta, &u.grad_beta});
  };
  unit("stem.", stem_, "conv", "bn");
  for (auto& r : layers_) {
    const std::string prefix =
        "R" + std::to_string(r.spec.block_index) + ".L" + std::to_string(r.spec.layer_index) + ".";
    unit(prefix, r.first, "conv1", "bn1");
    unit(prefix, r.second, "conv2", "bn2");
    if (r.shortcut_conv) {
      params.push_back({prefix + "shortcut.weight", "conv", &r.shortcut_conv->weights,
                        &r.shortcut_grad_w});
    }
  }
  params.push_back({"fc.weight", "linear", &fc_.weight, &fc_grad_w_});
  params.push_back({"fc.bias", "linear", &fc_.bias, &fc_grad_b_});
  return params;
}

template <typename F>
void ResNet1d::visit_state(F&& f) {
  for (auto& p : parameters()) f(p.name, *p.value);
  f("stem.bn.running_mean", stem_.bn.running_mean);
  f("stem.bn.running_var", stem_.bn.running_var);
  for (auto& r : layers_) {
    const std::string prefix =
        "R" + std::to_string(r.spec.block_index) + ".L" + std::to_string(r.spec.layer_index) + ".";
    f(prefix + "bn1.running_mean", r.first.bn.running_mean);
    f(prefix + "bn1.running_var", r.first.bn.running_var);
    f(prefix + "bn2.running_mean", r.second.bn.running_mean);
    f(prefix + "bn2.running_var", r.second.bn.running_var);
  }
}

std::vector<NamedTensor> ResNet1d::state() {
  std::vector<NamedTensor> out;
  visit_state([&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ResNet1d::state() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  const_cast<ResNet1d*>(this)->visit_state(
      [&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

// Checkpoint layout:
//   "ECGSCALENET-CKPT 1\n"
//   "meta <bytes>\n" <JSON: network spec, seed, dropout>
//   "tensors <count>\n"
//   per tensor: "<name> <numel>\n" <numel little-endian IEEE-754 doubles>
namespace {

constexpr const char* kCheckpointMagic = "ECGSCALENET-CKPT";
constexpr int kCheckpointVersion = 1;

void write_le_doubles(std::ostream& os, std::span<const double> values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_le_doubles(std::istream& is, std::span<double> values, const std::string& path) {
  std::vector<unsigned char> buf(values.size() * 8);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw ParseError(kModule, "truncated checkpoint '" + path + "'");
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
}

std::string read_line(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(kModule, "truncated checkpoint '" + path + "'");
  return line;
}

}  // namespace

void save_checkpoint(const ResNet1d& model, const std::string& path) {
  nlohmann::json meta;
  meta["network"] = nlohmann::json::parse(to_json(model.spec()));
  meta["seed"] = model.seed();
  meta["dropout_rate"] = model.dropout_rate();
  const std::string meta_text = meta.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(kModule, "cannot write checkpoint '" + path + "'");
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    os << "meta " << meta_text.size() << '\n' << meta_text << '\n';
    const auto state = model.state();
    os << "tensors " << state.size() << '\n';
    for (const auto& [name, t] : state) {
      os << name << ' ' << t->size() << '\n';
      write_le_doubles(os, t->data());
    }
    if (!os) throw Error(kModule, "failed writing checkpoint '" + path + "'");
  }
  std::rename(tmp.c_str(), path.c_str());
}

ResNet1d load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(kModule, "cannot open checkpoint '" + path + "'");
  std::istringstream header(read_line(is, path));
  std::string magic;
  int version = 0;
  header >> magic >> version;
  if (magic != kCheckpointMagic) throw ParseError(kModule, "'" + path + "' is not a checkpoint");
  if (version != kCheckpointVersion) {
    throw ParseError(kModule, "unsupported checkpoint version " + std::to_string(version));
  }
  std::istringstream meta_line(read_line(is, path));
  std::string tag;
  std::size_t meta_bytes = 0;
  meta_line >> tag >> meta_bytes;
  if (tag != "meta") throw ParseError(kModule, "checkpoint missing meta block");
  std::string meta_text(meta_bytes, '\0');
  is.read(meta_text.data(), static_cast<std::streamsize>(meta_bytes));
  if (!is) throw ParseError(kModule, "truncated checkpoint '" + path + "'");
  read_line(is, path);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(kModule, std::string("bad checkpoint meta: ") + e.what());
  }
  const NetworkSpec spec = network_spec_from_json(meta.at("network").dump());
  ResNet1d model(spec, meta.at("seed").get<std::uint64_t>(), meta.at("dropout_rate").get<double>());

  std::istringstream count_line(read_line(is, path));
  std::size_t count = 0;
  count_line >> tag >> count;
  auto state = model.state();
  if (tag != "tensors" || count != state.size()) {
    throw ParseError(kModule, "checkpoint tensor count " + std::to_string(count) +
                                  " does not match network (" + std::to_string(state.size()) + ")");
  }
  for (auto& entry : state) {
    std::istringstream line(read_line(is, path));
    std::string name;
    std::size_t numel = 0;
    line >> name >> numel;
    if (name != entry.name || numel != entry.value->size()) {
      throw ParseError(kModule, "checkpoint tensor '" + name + "' does not match '" + entry.name + "'");
    }
    read_le_doubles(is, entry.value->data(), path);
  }
  return model;
}

}  // namespace scalenet::net
