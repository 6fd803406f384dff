#include "scalenet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "scalenet/error.hpp"

namespace scalenet::train {

namespace {

constexpr const char* kModule = "train";
using nlohmann::json;

std::string format_bound(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void require_range(const char* name, double v, double lo, double hi, const char* bound_text) {
  if (!(v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12))) {
    throw ConfigError(kModule, std::string(name) + " = " + format_bound(v) + " violates bound " + bound_text);
  }
}

bool on_grid(double v, double step, double lo, double hi) {
  if (v < lo - 1e-12 || v > hi + 1e-12) return false;
  const double k = std::round((v - lo) / step);
  return std::abs(v - (lo + k * step)) < 1e-9;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

void TrainConfig::validate() const {
  require_range("learning_rate", learning_rate, 1e-4, 1e-2, "[1e-4, 1e-2]");
  require_range("weight_decay", weight_decay, 1e-6, 1e-4, "[1e-6, 1e-4]");
  if (!on_grid(dropout_rate, 0.05, 0.0, 0.3)) {
    throw ConfigError(kModule, "dropout_rate = " + format_bound(dropout_rate) +
                                   " violates bound {0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3}");
  }
  if (n_ops < 0 || n_ops > 2) {
    throw ConfigError(kModule, "n_ops = " + std::to_string(n_ops) + " violates bound {0, 1, 2}");
  }
  if (magnitude < 0 || magnitude > augment::kMaxMagnitude) {
    throw ConfigError(kModule, "magnitude = " + std::to_string(magnitude) + " violates bound {0, ..., 10}");
  }
  if (!on_grid(mixup_beta, 0.1, 0.0, 0.2)) {
    throw ConfigError(kModule, "mixup_beta = " + format_bound(mixup_beta) + " violates bound {0, 0.1, 0.2}");
  }
  if (batch_size < 1) throw ConfigError(kModule, "batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError(kModule, "max_epochs must be >= 0");
  if (peak_epoch < 1) throw ConfigError(kModule, "peak_epoch must be >= 1");
  if (max_epochs > 0 && peak_epoch >= max_epochs) {
    throw ConfigError(kModule, "peak_epoch (" + std::to_string(peak_epoch) + ") must be below max_epochs (" +
                                   std::to_string(max_epochs) + ")");
  }
}

std::string to_json(const TrainConfig& c) {
  json j{{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
         {"dropout_rate", c.dropout_rate},   {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},       {"peak_epoch", c.peak_epoch},
         {"n_ops", c.n_ops},                 {"magnitude", c.magnitude},
         {"mixup_beta", c.mixup_beta},       {"seed", c.seed},
         {"augment_seed", c.augment_seed}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.peak_epoch = j.value("peak_epoch", c.peak_epoch);
    c.n_ops = j.value("n_ops", c.n_ops);
    c.magnitude = j.value("magnitude", c.magnitude);
    c.mixup_beta = j.value("mixup_beta", c.mixup_beta);
    c.seed = j.value("seed", c.seed);
    c.augment_seed = j.value("augment_seed", c.augment_seed);
  } catch (const json::exception& e) {
    throw ParseError(kModule, std::string("bad train config: ") + e.what());
  }
  c.validate();
  return c;
}

double one_cycle_lr(double epoch, double max_lr, int peak_epoch, int max_epochs) {
  if (peak_epoch < 1 || peak_epoch >= max_epochs) {
    throw ConfigError(kModule, "one-cycle schedule needs 1 <= peak_epoch < max_epochs");
  }
  if (!(epoch >= 0.0 && epoch <= max_epochs)) {
    throw ConfigError(kModule, "epoch " + format_bound(epoch) + " outside [0, max_epochs]");
  }
  const double start = max_lr / 25.0, end = max_lr / 1e4;
  if (epoch <= peak_epoch) {
    const double t = epoch / peak_epoch;
    return start + (max_lr - start) * (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
  }
  const double t = (epoch - peak_epoch) / (max_epochs - peak_epoch);
  return end + (max_lr - end) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

void adam_step(std::vector<net::Parameter>& params, AdamState& s, double lr, double weight_decay) {
  for (const auto& p : params) {
    if (!p.grad->all_finite()) throw NumericError(kModule, "non-finite gradient in '" + p.name + "'");
    if (p.grad->shape() != p.value->shape()) {
      throw ShapeError(kModule, p.name, "gradient shape differs from parameter");
    }
  }
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.value->shape());
      s.v.emplace_back(p.value->shape());
    }
  }
  if (s.m.size() != params.size()) throw ShapeError(kModule, "parameters", "optimizer state size mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value->data();
    const auto g = params[i].grad->data();
    auto m = s.m[i].data();
    auto v = s.v[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g[k];
      v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1, v_hat = v[k] / c2;
      w[k] -= lr * (m_hat / (std::sqrt(v_hat) + s.epsilon) + weight_decay * w[k]);
    }
  }
}

std::string TrainLog::to_jsonl(bool include_wall_time) const {
  std::ostringstream os;
  for (const auto& e : epochs) {
    json j{{"epoch", e.epoch},
           {"train_loss", e.train_loss},
           {"val_macro_f1", e.val_macro_f1},
           {"learning_rate", e.learning_rate}};
    if (include_wall_time) j["wall_seconds"] = e.wall_seconds;
    os << j.dump() << '\n';
  }
  return os.str();
}

TrainData make_train_data(const data::Dataset& ds) {
  TrainData d;
  d.records = &ds.records;
  d.train = ds.manifest.indices(data::Split::train);
  d.validation = ds.manifest.indices(data::Split::validation);
  return d;
}

Tensor predict(net::ResNet1d& model, const std::vector<data::EcgRecord>& records,
               const std::vector<std::size_t>& indices, int batch_size) {
  if (indices.empty()) throw ValidationError(kModule, "nothing to predict");
  const auto labels = static_cast<std::size_t>(model.spec().num_labels());
  Tensor out({indices.size(), labels});
  const auto step = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t begin = 0; begin < indices.size(); begin += step) {
    const std::size_t end = std::min(indices.size(), begin + step);
    const std::span<const std::size_t> chunk(indices.data() + begin, end - begin);
    const auto batch = data::make_batch(records, chunk);
    if (batch.targets.dim(1) != labels) {
      throw ShapeError(kModule, "labels", "model has " + std::to_string(labels) + " outputs, data has " +
                                              std::to_string(batch.targets.dim(1)) + " labels");
    }
    const Tensor probs = ops::sigmoid(model.forward(batch.inputs, ops::Mode::inference));
    std::copy(probs.data().begin(), probs.data().end(), out.row(begin).begin());
  }
  return out;
}

metrics::EvalTable evaluate(net::ResNet1d& model, const data::Dataset& ds,
                            const std::vector<std::size_t>& indices, int batch_size) {
  metrics::EvalTable t;
  t.probabilities = predict(model, ds.records, indices, batch_size);
  t.targets = Tensor(t.probabilities.shape());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& r = ds.records[indices[k]];
    for (std::size_t l = 0; l < r.labels.size(); ++l) t.targets.at(k, l) = r.labels[l];
    t.sources.push_back(r.source);
  }
  t.labels = ds.manifest.labels;
  t.categories = ds.manifest.categories;
  return t;
}

Trainer::Trainer(net::ResNet1d model, TrainData data, TrainConfig config)
    : model_(std::move(model)), best_(model_), data_(std::move(data)), config_(config) {
  config_.validate();
  if (data_.records == nullptr || data_.train.empty()) {
    throw ValidationError(kModule, "training split is empty");
  }
  if (data_.validation.empty()) throw ValidationError(kModule, "validation split is empty");
  const auto& first = (*data_.records)[data_.train.front()];
  if (first.labels.size() != static_cast<std::size_t>(model_.spec().num_labels())) {
    throw ShapeError(kModule, "labels", "model label width " + std::to_string(model_.spec().num_labels()) +
                                            " differs from dataset (" + std::to_string(first.labels.size()) + ")");
  }
  model_.set_dropout_rate(config_.dropout_rate);
  best_ = model_;
}

double Trainer::validation_f1() {
  const Tensor probs = predict(model_, *data_.records, data_.validation, config_.batch_size);
  Tensor targets(probs.shape());
  for (std::size_t k = 0; k < data_.validation.size(); ++k) {
    const auto& r = (*data_.records)[data_.validation[k]];
    for (std::size_t l = 0; l < r.labels.size(); ++l) targets.at(k, l) = r.labels[l];
  }
  return metrics::macro_f1(probs, targets).macro;
}

std::optional<EpochRecord> Trainer::run_epoch() {
  if (finished()) throw ConfigError(kModule, "training already finished");
  const auto started = std::chrono::steady_clock::now();
  const int epoch = epochs_done();
  const auto e = static_cast<std::uint64_t>(epoch);
  Rng order_rng = Rng::stream(config_.seed, "shuffle", e);
  Rng dropout_rng = Rng::stream(config_.seed, "dropout", e);
  Rng augment_rng = Rng::stream(config_.augment_seed, "augment", e);
  Rng mixup_rng = Rng::stream(config_.augment_seed, "mixup", e);

  std::vector<std::size_t> order = data_.train;
  shuffle(order, order_rng);
  // Batch normalization needs two samples; a trailing singleton joins the previous batch.
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  std::vector<std::pair<std::size_t, std::size_t>> batches;
  for (std::size_t b = 0; b < order.size(); b += bs) batches.emplace_back(b, std::min(order.size(), b + bs));
  if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
    batches[batches.size() - 2].second = batches.back().second;
    batches.pop_back();
  }

  const augment::AugmentPolicy policy{config_.n_ops, config_.magnitude};
  const augment::MixupConfig mix{config_.mixup_beta};
  const double steps = static_cast<double>(batches.size());
  EpochRecord rec;
  rec.epoch = epoch + 1;
  rec.learning_rate = config_.max_epochs > 0
                          ? one_cycle_lr(epoch, config_.learning_rate, config_.peak_epoch, config_.max_epochs)
                          : config_.learning_rate;
  double loss_sum = 0.0;
  auto params = model_.parameters();
  try {
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const auto [lo, hi] = batches[step];
      const std::span<const std::size_t> chunk(order.data() + lo, hi - lo);
      auto batch = data::make_batch(*data_.records, chunk);
      if (policy.n_ops > 0) {
        const auto& rate = (*data_.records)[chunk[0]].sampling_rate_hz;
        for (std::size_t k = 0; k < chunk.size(); ++k) {
          const auto row = batch.inputs.row(k);
          Tensor x({data::kNumLeads, row.size() / data::kNumLeads}, std::vector<double>(row.begin(), row.end()));
          const Tensor y = augment::apply_policy(x, policy, augment_rng, rate);
          std::copy(y.data().begin(), y.data().end(), row.begin());
        }
      }
      augment::mixup_batch(batch.inputs, batch.targets, mix, mixup_rng);

      const double lr = one_cycle_lr(epoch + static_cast<double>(step) / steps, config_.learning_rate,
                                     config_.peak_epoch, config_.max_epochs);
      const Tensor logits = model_.forward(batch.inputs, ops::Mode::training, &dropout_rng);
      const double loss = ops::bce_with_logits_loss(logits, batch.targets);
      if (!std::isfinite(loss)) throw NumericError(kModule, "loss became non-finite");
      loss_sum += loss * static_cast<double>(chunk.size());
      model_.backward(ops::bce_with_logits_backward(logits, batch.targets));
      adam_step(params, adam_, lr, config_.weight_decay);
    }
    model_.release_cache();
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_macro_f1 = validation_f1();
  } catch (const NumericError& err) {
    log_.diverged = true;
    log_.message = err.what();
    return std::nullopt;
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  log_.epochs.push_back(rec);
  if (rec.val_macro_f1 > log_.best_f1) {
    log_.best_f1 = rec.val_macro_f1;
    log_.best_epoch = rec.epoch;
    best_ = model_;
  }
  return rec;
}

std::size_t Trainer::memory_bytes() const {
  std::size_t n = 0;
  for (const auto& [name, t] : model_.state()) n += t->size();
  // Model, best copy, gradients and two Adam moments.
  return n * sizeof(double) * 5;
}

TrainResult train_model(net::ResNet1d model, const TrainData& data, const TrainConfig& config,
                        const Reporter& reporter, const std::string& checkpoint_path,
                        const std::string& log_path) {
  Trainer t(std::move(model), data, config);
  while (!t.finished()) {
    const auto rec = t.run_epoch();
    if (!rec) break;
    if (reporter && reporter(rec->epoch, rec->val_macro_f1) == Decision::stop) {
      t.log().stopped_early = !t.finished();
      break;
    }
  }
  if (!checkpoint_path.empty()) net::save_checkpoint(t.best_model(), checkpoint_path);
  if (!log_path.empty()) {
    std::ofstream os(log_path);
    if (!os) throw Error(kModule, "cannot write train log '" + log_path + "'");
    os << t.log().to_jsonl();
  }
  return TrainResult{t.log(), t.best_model()};
}

}  // namespace scalenet::train
