#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scalenet/ecg_data.hpp"
#include "scalenet/metrics.hpp"
#include "scalenet/network_spec.hpp"
#include "scalenet/resnet1d.hpp"
#include "scalenet/train.hpp"

namespace scalenet::hpo {

// Hyperparameter ranges joined with a scale grid. Continuous ranges are
// sampled log-uniformly, discrete sets uniformly.
struct SearchSpace {
  std::string name = "custom";
  double lr_min = 1e-4, lr_max = 1e-2;
  double wd_min = 1e-6, wd_max = 1e-4;
  std::vector<double> dropout = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  std::vector<int> n_aug = {0, 1, 2};
  std::vector<int> magnitude = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> mixup_beta = {0.0, 0.1, 0.2};
  std::vector<int> depths = {2, 4, 8, 16};
  std::vector<int> channels = {16, 32, 64, 128};
  std::vector<int> kernels = {3, 5, 9, 15};
  // Trained width is channels / channel_divisor (at least 1); reported
  // configs keep the nominal width.
  int channel_divisor = 1;

  // Every range and set must lie inside the training bounds and be non-empty.
  void validate() const;
  std::size_t grid_size() const { return depths.size() * channels.size() * kernels.size(); }
};

// "large" (the full grid), "medium", "optimal".
SearchSpace preset_space(std::string_view name);
std::string to_json(const SearchSpace& s);
SearchSpace search_space_from_json(const std::string& text);
// A preset name or a path to a JSON space file.
SearchSpace load_search_space(const std::string& name_or_path);

struct TrialConfig {
  std::size_t index = 0;
  std::string trial_id;           // "t%03zu"
  train::TrainConfig train;       // seeds filled from `seed`
  net::ScaleConfig scale;         // nominal
  net::ScaleConfig model_scale;   // after the channel divisor
  std::uint64_t seed = 0;         // model initialisation; training seeds derive from it
};

// i.i.d. samples; `base` supplies batch size, epoch budget and peak epoch.
std::vector<TrialConfig> sample_trials(const SearchSpace& space, std::size_t n, std::uint64_t seed,
                                       const train::TrainConfig& base = {});

// Rungs grace * eta^i <= max_epochs with per-rung metric lists.
class AshaState {
 public:
  AshaState(int grace_period = 10, int reduction_factor = 2, int max_epochs = 40);

  int grace_period() const noexcept { return grace_; }
  int reduction_factor() const noexcept { return eta_; }
  const std::vector<int>& rungs() const noexcept { return rungs_; }
  bool is_rung(int epoch) const;
  // Metrics recorded at a rung, in arrival order.
  const std::vector<std::pair<std::string, double>>& recorded(int rung_epoch) const;

 private:
  friend train::Decision asha_report(AshaState&, const std::string&, int, double);
  int grace_, eta_;
  std::vector<int> rungs_;
  std::map<int, std::vector<std::pair<std::string, double>>> recorded_;
};

// Records the metric and continues iff it is among the top ceil(k / eta) of
// the k metrics recorded at the rung so far (ties continue).
train::Decision asha_report(AshaState& state, const std::string& trial_id, int rung_epoch, double metric);

// Synchronous halving over a complete rung: exactly ceil(k / eta) entries
// are promoted, highest metric first, ties to the earlier entry.
std::vector<bool> promote_top(const std::vector<double>& metrics, int reduction_factor);

enum class TrialStatus { completed, stopped, failed };
std::string_view to_string(TrialStatus s);

struct TrialResult {
  TrialConfig config;
  std::map<int, double> rung_metrics;  // rung epoch -> validation macro-F1
  TrialStatus status = TrialStatus::completed;
  int stopped_at_rung = 0;
  int epochs_run = 0;
  double best_f1 = -1.0;
  int best_epoch = 0;
  std::string message;  // failure reason
};

struct SearchOptions {
  int grace_period = 10;
  int reduction_factor = 2;
  bool sync = true;
  int workers = 1;  // async mode only
  // Paused sync-mode trainers beyond this many bytes are dropped and
  // replayed from their seeds when promoted.
  std::size_t paused_memory_budget = std::size_t{1} << 30;
};

struct SearchResult {
  std::vector<TrialResult> trials;  // sorted by best F1, then trial index
  std::optional<net::ResNet1d> best_model;

  // Survivors per rung: trials that reached each rung epoch.
  std::map<int, std::size_t> rung_counts() const;
};

SearchResult run_search(const std::vector<TrialConfig>& trials, const data::Dataset& dataset,
                        const SearchOptions& options = {});
SearchResult run_search(const SearchSpace& space, const data::Dataset& dataset, std::size_t n_trials,
                        std::uint64_t seed, const train::TrainConfig& base = {},
                        const SearchOptions& options = {});

// trial_id, f1, K, C, D, lr, wd, dropout, n_aug, magnitude, beta, status,
// epochs; one row per trial in result order.
std::string results_csv(const SearchResult& result);
void write_results_csv(const SearchResult& result, const std::string& path);

enum class SweepMode { per_cell, shared };

// Best F1 per (D, C, K) of `space`'s grid. per_cell samples n_trials fresh
// hyperparameter sets for every cell; shared reuses one list across cells.
metrics::GridReport grid_sweep(const SearchSpace& space, const data::Dataset& dataset, std::size_t n_trials,
                               std::uint64_t seed, SweepMode mode = SweepMode::per_cell,
                               const train::TrainConfig& base = {}, const SearchOptions& options = {},
                               const std::string& dataset_tag = "");

}  // namespace scalenet::hpo
