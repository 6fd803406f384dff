#include "scalenet/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "scalenet/error.hpp"
#include "scalenet/rng.hpp"

namespace scalenet::hpo {

namespace {

constexpr const char* kModule = "hpo";
using nlohmann::json;

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.index(v.size())];
}

template <typename T>
void require_nonempty(const std::vector<T>& v, const char* name) {
  if (v.empty()) throw ConfigError(kModule, std::string("search space set '") + name + "' is empty");
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

net::ScaleConfig divided(const net::ScaleConfig& s, int divisor) {
  net::ScaleConfig out = s;
  out.channels = std::max(1, s.channels / divisor);
  return out;
}

}  // namespace

void SearchSpace::validate() const {
  require_nonempty(dropout, "dropout");
  require_nonempty(n_aug, "n_aug");
  require_nonempty(magnitude, "magnitude");
  require_nonempty(mixup_beta, "mixup_beta");
  require_nonempty(depths, "depths");
  require_nonempty(channels, "channels");
  require_nonempty(kernels, "kernels");
  if (!(lr_min <= lr_max)) throw ConfigError(kModule, "lr range is empty");
  if (!(wd_min <= wd_max)) throw ConfigError(kModule, "wd range is empty");
  if (channel_divisor < 1) throw ConfigError(kModule, "channel_divisor must be >= 1");
  // Every value must pass the training-config bounds on its own.
  auto check = [](auto&& set_field) {
    train::TrainConfig c;
    set_field(c);
    c.validate();
  };
  for (double v : {lr_min, lr_max}) check([&](train::TrainConfig& c) { c.learning_rate = v; });
  for (double v : {wd_min, wd_max}) check([&](train::TrainConfig& c) { c.weight_decay = v; });
  for (double v : dropout) check([&](train::TrainConfig& c) { c.dropout_rate = v; });
  for (int v : n_aug) check([&](train::TrainConfig& c) { c.n_ops = v; });
  for (int v : magnitude) check([&](train::TrainConfig& c) { c.magnitude = v; });
  for (double v : mixup_beta) check([&](train::TrainConfig& c) { c.mixup_beta = v; });
  for (int d : depths) net::ScaleConfig{d, 16, 3}.validate();
  for (int c : channels) net::ScaleConfig{2, c, 3}.validate();
  for (int k : kernels) net::ScaleConfig{2, 16, k}.validate();
}

SearchSpace preset_space(std::string_view name) {
  SearchSpace s;
  if (name == "large") {
    s.name = "large";
  } else if (name == "medium") {
    s.name = "medium";
    s.depths = {2, 4};
    s.channels = {64, 128};
    s.kernels = {3, 5};
  } else if (name == "optimal") {
    s.name = "optimal";
    s.depths = {4};
    s.channels = {128};
    s.kernels = {3};
  } else {
    throw ConfigError(kModule, "unknown search space preset '" + std::string(name) +
                                   "' (expected large, medium or optimal)");
  }
  return s;
}

std::string to_json(const SearchSpace& s) {
  json j{{"name", s.name},
         {"lr", {s.lr_min, s.lr_max}},
         {"wd", {s.wd_min, s.wd_max}},
         {"dropout", s.dropout},
         {"n_aug", s.n_aug},
         {"magnitude", s.magnitude},
         {"mixup_beta", s.mixup_beta},
         {"depths", s.depths},
         {"channels", s.channels},
         {"kernels", s.kernels},
         {"channel_divisor", s.channel_divisor}};
  return j.dump(2);
}

SearchSpace search_space_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(kModule, std::string("search space: ") + e.what());
  }
  SearchSpace s;
  if (j.contains("preset")) s = preset_space(j.at("preset").get<std::string>());
  try {
    auto range = [&](const char* key, double& lo, double& hi) {
      if (!j.contains(key)) return;
      const auto& r = j.at(key);
      if (!r.is_array() || r.size() != 2) throw ConfigError(kModule, std::string(key) + " must be [min, max]");
      lo = r[0].get<double>();
      hi = r[1].get<double>();
    };
    auto set = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    set("name", s.name);
    range("lr", s.lr_min, s.lr_max);
    range("wd", s.wd_min, s.wd_max);
    set("dropout", s.dropout);
    set("n_aug", s.n_aug);
    set("magnitude", s.magnitude);
    set("mixup_beta", s.mixup_beta);
    set("depths", s.depths);
    set("channels", s.channels);
    set("kernels", s.kernels);
    set("channel_divisor", s.channel_divisor);
  } catch (const json::exception& e) {
    throw ParseError(kModule, std::string("search space: ") + e.what());
  }
  s.validate();
  return s;
}

SearchSpace load_search_space(const std::string& name_or_path) {
  if (name_or_path == "large" || name_or_path == "medium" ||
      name_or_path == "optimal") {
    return preset_space(name_or_path);
  }
  std::ifstream is(name_or_path);
  if (!is) throw ConfigError(kModule, "search space '" + name_or_path + "' is neither a preset nor a readable file");
  std::stringstream ss;
  ss << is.rdbuf();
  return search_space_from_json(ss.str());
}

std::vector<TrialConfig> sample_trials(const SearchSpace& space, std::size_t n, std::uint64_t seed,
                                       const train::TrainConfig& base) {
  space.validate();
  std::vector<TrialConfig> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, "trial", i);
    TrialConfig t;
    t.index = i;
    char id[32];
    std::snprintf(id, sizeof id, "t%03zu", i);
    t.trial_id = id;
    t.train = base;
    t.train.learning_rate = rng.log_uniform(space.lr_min, space.lr_max);
    t.train.weight_decay = rng.log_uniform(space.wd_min, space.wd_max);
    t.train.dropout_rate = pick(space.dropout, rng);
    t.train.n_ops = pick(space.n_aug, rng);
    t.train.magnitude = pick(space.magnitude, rng);
    t.train.mixup_beta = pick(space.mixup_beta, rng);
    t.scale.depth = pick(space.depths, rng);
    t.scale.channels = pick(space.channels, rng);
    t.scale.kernel = pick(space.kernels, rng);
    t.model_scale = divided(t.scale, space.channel_divisor);
    t.seed = mix_seed(seed, "trial-seed", i);
    t.train.seed = mix_seed(t.seed, "train");
    t.train.augment_seed = mix_seed(t.seed, "augment");
    out.push_back(std::move(t));
  }
  return out;
}

AshaState::AshaState(int grace_period, int reduction_factor, int max_epochs)
    : grace_(grace_period), eta_(reduction_factor) {
  if (grace_ < 1) throw ConfigError(kModule, "grace_period must be >= 1");
  if (eta_ < 2) throw ConfigError(kModule, "reduction_factor must be >= 2");
  for (long r = grace_; r <= max_epochs; r *= eta_) rungs_.push_back(static_cast<int>(r));
}

bool AshaState::is_rung(int epoch) const {
  return std::binary_search(rungs_.begin(), rungs_.end(), epoch);
}

const std::vector<std::pair<std::string, double>>& AshaState::recorded(int rung_epoch) const {
  static const std::vector<std::pair<std::string, double>> empty;
  const auto it = recorded_.find(rung_epoch);
  return it == recorded_.end() ? empty : it->second;
}

namespace {

// The q-th largest value, q = ceil(k / eta).
double cutoff(std::vector<double> v, int eta) {
  const std::size_t q = (v.size() + static_cast<std::size_t>(eta) - 1) / static_cast<std::size_t>(eta);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(q - 1), v.end(), std::greater<>());
  return v[q - 1];
}

}  // namespace

train::Decision asha_report(AshaState& state, const std::string& trial_id, int rung_epoch, double metric) {
  if (!state.is_rung(rung_epoch)) {
    throw ConfigError(kModule, "epoch " + std::to_string(rung_epoch) + " is not a configured rung");
  }
  auto& list = state.recorded_[rung_epoch];
  for (const auto& [id, m] : list) {
    if (id == trial_id) {
      throw ValidationError(kModule, "duplicate report for trial '" + trial_id + "' at rung " +
                                         std::to_string(rung_epoch));
    }
  }
  list.emplace_back(trial_id, metric);
  std::vector<double> values;
  values.reserve(list.size());
  for (const auto& e : list) values.push_back(e.second);
  return metric >= cutoff(std::move(values), state.reduction_factor()) ? train::Decision::proceed
                                                                      : train::Decision::stop;
}

std::vector<bool> promote_top(const std::vector<double>& metrics, int reduction_factor) {
  const std::size_t q = (metrics.size() + static_cast<std::size_t>(reduction_factor) - 1) /
                        static_cast<std::size_t>(reduction_factor);
  std::vector<std::size_t> order(metrics.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return metrics[a] > metrics[b]; });
  std::vector<bool> out(metrics.size(), false);
  for (std::size_t k = 0; k < q; ++k) out[order[k]] = true;
  return out;
}

std::string_view to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::completed: return "completed";
    case TrialStatus::stopped: return "stopped";
    case TrialStatus::failed: return "failed";
  }
  return "?";
}

std::map<int, std::size_t> SearchResult::rung_counts() const {
  std::map<int, std::size_t> out;
  for (const auto& t : trials) {
    for (const auto& [rung, m] : t.rung_metrics) ++out[rung];
  }
  return out;
}

namespace {

train::Trainer make_trainer(const TrialConfig& t, const data::Dataset& ds, const train::TrainData& data) {
  const auto spec = net::NetworkSpec::build(t.model_scale, static_cast<int>(ds.manifest.labels.size()));
  return train::Trainer(net::ResNet1d(spec, t.seed), data, t.train);
}

// Tracks the best model over all trials: highest best F1, ties to the lower
// trial index, so the winner is the first entry of the sorted results.
struct BestTracker {
  std::optional<net::ResNet1d> model;
  double f1 = -1.0;
  std::size_t index = 0;

  void offer(const train::Trainer& t, std::size_t trial_index) {
    const double f = t.log().best_f1;
    if (f < 0.0) return;
    if (!model || f > f1 || (f == f1 && trial_index <= index)) {
      model = t.best_model();
      f1 = f;
      index = trial_index;
    }
  }
};

void absorb_log(TrialResult& r, const train::TrainLog& log) {
  r.epochs_run = static_cast<int>(log.epochs.size());
  r.best_f1 = log.best_f1;
  r.best_epoch = log.best_epoch;
  if (log.diverged) {
    r.status = TrialStatus::failed;
    r.message = log.message;
  }
}

void sort_results(SearchResult& out) {
  std::stable_sort(out.trials.begin(), out.trials.end(), [](const TrialResult& a, const TrialResult& b) {
    const bool af = a.status != TrialStatus::failed, bf = b.status != TrialStatus::failed;
    if (af != bf) return af;
    if (a.best_f1 != b.best_f1) return a.best_f1 > b.best_f1;
    return a.config.index < b.config.index;
  });
}

int max_epochs_of(const std::vector<TrialConfig>& trials) {
  int m = 0;
  for (const auto& t : trials) m = std::max(m, t.train.max_epochs);
  return m;
}

SearchResult run_sync(const std::vector<TrialConfig>& trials, const data::Dataset& ds,
                      const SearchOptions& opt) {
  const auto data = train::make_train_data(ds);
  const AshaState asha(opt.grace_period, opt.reduction_factor, max_epochs_of(trials));

  std::vector<TrialResult> results(trials.size());
  std::vector<std::optional<train::Trainer>> paused(trials.size());
  std::vector<std::size_t> active;
  BestTracker best;
  std::size_t paused_bytes = 0;

  for (std::size_t i = 0; i < trials.size(); ++i) {
    results[i].config = trials[i];
    try {
      paused[i].emplace(make_trainer(trials[i], ds, data));
      active.push_back(i);
    } catch (const Error& e) {
      results[i].status = TrialStatus::failed;
      results[i].message = e.what();
    }
  }
  // Initial trainers are cheap to rebuild; only paused progress is budgeted.
  for (auto& p : paused) p.reset();
  // Tie-breaks follow the trial index, not the submission order.
  std::sort(active.begin(), active.end(),
            [&](std::size_t a, std::size_t b) { return trials[a].index < trials[b].index; });

  std::vector<int> stages = asha.rungs();
  const int max_epochs = max_epochs_of(trials);
  if (stages.empty() || stages.back() < max_epochs) stages.push_back(max_epochs);

  for (const int target : stages) {
    std::vector<std::size_t> reached;
    std::vector<double> metrics;
    for (const std::size_t i : active) {
      auto& r = results[i];
      std::optional<train::Trainer> tr;
      try {
        if (paused[i]) {
          paused_bytes -= paused[i]->memory_bytes();
          tr = std::move(paused[i]);
          paused[i].reset();
        } else {
          tr.emplace(make_trainer(trials[i], ds, data));
          // Replays any epochs dropped under the memory budget.
          while (tr->epochs_done() < r.epochs_run && tr->run_epoch()) {
          }
        }
        const int goal = std::min(target, tr->config().max_epochs);
        while (tr->epochs_done() < goal && tr->run_epoch()) {
        }
      } catch (const Error& e) {
        r.status = TrialStatus::failed;
        r.message = e.what();
        continue;
      }
      absorb_log(r, tr->log());
      best.offer(*tr, i);
      if (r.status == TrialStatus::failed) continue;
      if (asha.is_rung(target) && tr->epochs_done() == target) {
        r.rung_metrics[target] = tr->log().epochs.back().val_macro_f1;
        reached.push_back(i);
        metrics.push_back(r.rung_metrics[target]);
      }
      if (!tr->finished()) {
        const std::size_t bytes = tr->memory_bytes();
        if (paused_bytes + bytes <= opt.paused_memory_budget) {
          paused_bytes += bytes;
          paused[i] = std::move(tr);
        }
      }
    }
    std::vector<std::size_t> next;
    const auto promoted = promote_top(metrics, opt.reduction_factor);
    for (std::size_t k = 0; k < reached.size(); ++k) {
      const std::size_t i = reached[k];
      if (results[i].epochs_run >= trials[i].train.max_epochs) continue;
      if (promoted[k]) {
        next.push_back(i);
      } else {
        results[i].status = TrialStatus::stopped;
        results[i].stopped_at_rung = target;
        if (paused[i]) paused_bytes -= paused[i]->memory_bytes();
        paused[i].reset();
      }
    }
    // Trials with a shorter budget than this stage finished without a rung.
    active = std::move(next);
  }

  SearchResult out;
  out.trials = std::move(results);
  out.best_model = std::move(best.model);
  sort_results(out);
  return out;
}

SearchResult run_async(const std::vector<TrialConfig>& trials, const data::Dataset& ds,
                       const SearchOptions& opt) {
  const auto data = train::make_train_data(ds);
  AshaState asha(opt.grace_period, opt.reduction_factor, max_epochs_of(trials));
  std::vector<TrialResult> results(trials.size());
  BestTracker best;
  std::mutex mu;
  std::size_t next = 0;

  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= trials.size()) return;
        i = next++;
      }
      TrialResult r;
      r.config = trials[i];
      try {
        auto tr = make_trainer(trials[i], ds, data);
        while (!tr.finished()) {
          const auto rec = tr.run_epoch();
          if (!rec) break;
          if (!asha.is_rung(rec->epoch)) continue;
          std::lock_guard lock(mu);
          r.rung_metrics[rec->epoch] = rec->val_macro_f1;
          if (asha_report(asha, r.config.trial_id, rec->epoch, rec->val_macro_f1) == train::Decision::stop &&
              !tr.finished()) {
            r.status = TrialStatus::stopped;
            r.stopped_at_rung = rec->epoch;
            break;
          }
        }
        absorb_log(r, tr.log());
        std::lock_guard lock(mu);
        best.offer(tr, i);
      } catch (const Error& e) {
        r.status = TrialStatus::failed;
        r.message = e.what();
      }
      std::lock_guard lock(mu);
      results[i] = std::move(r);
    }
  };

  const int w = std::max(1, opt.workers);
  std::vector<std::thread> pool;
  for (int k = 0; k < w; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  SearchResult out;
  out.trials = std::move(results);
  out.best_model = std::move(best.model);
  sort_results(out);
  return out;
}

}  // namespace

SearchResult run_search(const std::vector<TrialConfig>& trials, const data::Dataset& dataset,
                        const SearchOptions& options) {
  if (options.workers < 1) throw ConfigError(kModule, "workers must be >= 1");
  if (trials.empty()) throw ConfigError(kModule, "no trials to run");
  return options.sync ? run_sync(trials, dataset, options) : run_async(trials, dataset, options);
}

SearchResult run_search(const SearchSpace& space, const data::Dataset& dataset, std::size_t n_trials,
                        std::uint64_t seed, const train::TrainConfig& base, const SearchOptions& options) {
  return run_search(sample_trials(space, n_trials, seed, base), dataset, options);
}

std::string results_csv(const SearchResult& result) {
  std::ostringstream os;
  os << "trial_id,f1,K,C,D,lr,wd,dropout,n_aug,magnitude,beta,status,epochs\n";
  for (const auto& t : result.trials) {
    const auto& c = t.config;
    os << c.trial_id << ',' << (t.best_f1 >= 0.0 ? format_g(t.best_f1) : "") << ',' << c.scale.kernel << ','
       << c.scale.channels << ',' << c.scale.depth << ',' << format_g(c.train.learning_rate) << ','
       << format_g(c.train.weight_decay) << ',' << format_g(c.train.dropout_rate) << ',' << c.train.n_ops << ','
       << c.train.magnitude << ',' << format_g(c.train.mixup_beta) << ',' << to_string(t.status) << ','
       << t.epochs_run << '\n';
  }
  return os.str();
}

void write_results_csv(const SearchResult& result, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(kModule, "cannot write '" + tmp + "'");
    os << results_csv(result);
    if (!os) throw Error(kModule, "write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(kModule, "cannot rename to '" + path + "'");
}

metrics::GridReport grid_sweep(const SearchSpace& space, const data::Dataset& dataset, std::size_t n_trials,
                               std::uint64_t seed, SweepMode mode, const train::TrainConfig& base,
                               const SearchOptions& options, const std::string& dataset_tag) {
  space.validate();
  metrics::GridReport grid;
  grid.depths = space.depths;
  grid.channels = space.channels;
  grid.kernels = space.kernels;
  grid.dataset = dataset_tag;
  std::uint64_t cell_index = 0;
  for (const int d : space.depths) {
    for (const int c : space.channels) {
      for (const int k : space.kernels) {
        SearchSpace cell = space;
        cell.depths = {d};
        cell.channels = {c};
        cell.kernels = {k};
        const std::uint64_t s = mode == SweepMode::shared ? seed : mix_seed(seed, "cell", cell_index);
        ++cell_index;
        const auto res = run_search(sample_trials(cell, n_trials, s, base), dataset, options);
        const auto& top = res.trials.front();
        metrics::GridCell gc;
        if (top.status != TrialStatus::failed && top.best_f1 >= 0.0) {
          gc.f1 = top.best_f1;
          const auto& tc = top.config.train;
          gc.winner = metrics::TrialSummary{top.config.scale.to_string() + "/" + top.config.trial_id,
                                            tc.learning_rate, tc.weight_decay, tc.dropout_rate, tc.n_ops,
                                            tc.magnitude, tc.mixup_beta};
        }
        grid.set({d, c, k}, std::move(gc));
      }
    }
  }
  return grid;
}

}  // namespace scalenet::hpo
