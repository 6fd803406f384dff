#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scalenet/augment.hpp"
#include "scalenet/ecg_data.hpp"
#include "scalenet/metrics.hpp"
#include "scalenet/resnet1d.hpp"

namespace scalenet::train {

// Hyperparameters of one training run. validate() enforces the search-space
// bounds: learning_rate in [1e-4, 1e-2], weight_decay in [1e-6, 1e-4],
// dropout_rate in {0, 0.05, ..., 0.3}, n_ops in {0, 1, 2}, magnitude in
// 0..10, mixup beta in {0, 0.1, 0.2}.
struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double dropout_rate = 0.0;
  int batch_size = 32;
  int max_epochs = 40;
  int peak_epoch = 10;
  int n_ops = 0;
  int magnitude = 0;
  double mixup_beta = 0.0;
  std::uint64_t seed = 0;          // shuffling and dropout
  std::uint64_t augment_seed = 0;  // augmentation policy and mixup

  void validate() const;
};

std::string to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

// Cosine ramp from max_lr / 25 at epoch 0 to max_lr at peak_epoch, then
// cosine decay to max_lr / 1e4 at max_epochs.
double one_cycle_lr(double epoch, double max_lr, int peak_epoch, int max_epochs);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m, v;
};

// Bias-corrected Adam with decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
// A non-finite gradient throws NumericError naming the parameter, before any
// parameter is touched.
void adam_step(std::vector<net::Parameter>& params, AdamState& state, double lr, double weight_decay);

struct EpochRecord {
  int epoch = 0;  // 1-based count of completed epochs
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  double learning_rate = 0.0;  // at the start of the epoch
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 = initial weights
  double best_f1 = -1.0;
  bool diverged = false;
  bool stopped_early = false;
  std::string message;

  // One JSON object per epoch; wall time is omitted when include_wall_time
  // is false so logs of identical runs compare byte-equal.
  std::string to_jsonl(bool include_wall_time = true) const;
};

// Training and validation views onto a standardized record set.
struct TrainData {
  const std::vector<data::EcgRecord>* records = nullptr;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

TrainData make_train_data(const data::Dataset& ds);

// Sigmoid outputs for the given records, evaluated in inference mode.
Tensor predict(net::ResNet1d& model, const std::vector<data::EcgRecord>& records,
               const std::vector<std::size_t>& indices, int batch_size = 64);

metrics::EvalTable evaluate(net::ResNet1d& model, const data::Dataset& ds,
                            const std::vector<std::size_t>& indices, int batch_size = 64);

enum class Decision { proceed, stop };
// Called after every epoch with the completed-epoch count and validation F1.
using Reporter = std::function<Decision(int epoch, double val_macro_f1)>;

// Epoch-at-a-time training state. Every epoch draws its randomness from
// streams keyed by the epoch index, so a paused trainer resumes exactly.
class Trainer {
 public:
  Trainer(net::ResNet1d model, TrainData data, TrainConfig config);

  const TrainConfig& config() const noexcept { return config_; }
  int epochs_done() const noexcept { return static_cast<int>(log_.epochs.size()); }
  bool finished() const noexcept { return log_.diverged || epochs_done() >= config_.max_epochs; }
  const TrainLog& log() const noexcept { return log_; }
  TrainLog& log() noexcept { return log_; }
  const net::ResNet1d& model() const noexcept { return model_; }
  const net::ResNet1d& best_model() const noexcept { return best_; }

  // Runs one epoch and records it. On a non-finite loss or gradient the log
  // is marked diverged and nullopt is returned.
  std::optional<EpochRecord> run_epoch();

  // Approximate resident size of model, optimizer and best-model copies.
  std::size_t memory_bytes() const;

 private:
  double validation_f1();

  net::ResNet1d model_;
  net::ResNet1d best_;
  TrainData data_;
  TrainConfig config_;
  AdamState adam_;
  TrainLog log_;
};

struct TrainResult {
  TrainLog log;
  net::ResNet1d best;
};

// Full run: epochs until max_epochs, divergence, or the reporter says stop.
// Writes the best checkpoint and the JSONL log when paths are non-empty.
TrainResult train_model(net::ResNet1d model, const TrainData& data, const TrainConfig& config,
                        const Reporter& reporter = {}, const std::string& checkpoint_path = "",
                        const std::string& log_path = "");

}  // namespace scalenet::train
