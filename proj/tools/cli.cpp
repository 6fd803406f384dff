#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "scalenet/augment.hpp"
#include "scalenet/ecg_data.hpp"
#include "scalenet/error.hpp"
#include "scalenet/hpo.hpp"
#include "scalenet/metrics.hpp"
#include "scalenet/probe.hpp"
#include "scalenet/resnet1d.hpp"
#include "scalenet/train.hpp"

#ifndef SCALENET_VERSION_STRING
#define SCALENET_VERSION_STRING "unknown"
#endif

namespace scalenet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kModule = "cli";

struct SynthOpts {
  std::string out;
  std::size_t records = 600;
  int labels = 4;
  double seconds = 10.0;
  double noise = 0.02;
  double tachy_fraction = 0.3;
  double morphology_probability = 0.3;
  double train_ratio = 0.7;
  double validation_ratio = 0.15;
  double test_ratio = 0.15;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthOpts, out, records, labels, seconds, noise, tachy_fraction,
                                                morphology_probability, train_ratio, validation_ratio, test_ratio,
                                                seed)

struct PreprocessOpts {
  std::string input;
  std::string out;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PreprocessOpts, input, out, seed)

struct TrainOpts {
  std::string dataset;
  std::string scale = "D2-C8-K3";
  std::string out;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double dropout_rate = 0.0;
  int batch_size = 32;
  int max_epochs = 40;
  int peak_epoch = 10;
  int n_ops = 0;
  int magnitude = 0;
  double mixup_beta = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t augment_seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainOpts, dataset, scale, out, learning_rate, weight_decay,
                                                dropout_rate, batch_size, max_epochs, peak_epoch, n_ops, magnitude,
                                                mixup_beta, seed, augment_seed)

struct SearchOpts {
  std::string dataset;
  std::string space = "large";
  std::string out;
  std::size_t trials = 50;
  int workers = 1;
  bool sync = false;
  int max_epochs = 40;
  int batch_size = 32;
  int peak_epoch = 10;
  int grace_period = 10;
  int reduction_factor = 2;
  int channel_divisor = 0;  // 0 keeps the space's own divisor
  std::string mode = "per-cell";  // sweep only
  std::string tag;                // sweep only
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SearchOpts, dataset, space, out, trials, workers, sync, max_epochs,
                                                batch_size, peak_epoch, grace_period, reduction_factor,
                                                channel_divisor, mode, tag, seed)

struct EvalOpts {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string by = "label";
  std::string out;
  int batch_size = 64;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalOpts, checkpoint, dataset, split, by, out, batch_size)

struct ReportOpts {
  std::string grid;
  std::string out;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ReportOpts, grid, out)

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(kModule, "cannot write '" + tmp.string() + "'");
    os << text;
    if (!os) throw Error(kModule, "write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

fs::path prepare_out_dir(const std::string& out) {
  if (out.empty()) throw ConfigError(kModule, "--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

std::string manifest_path_of(const std::string& dataset) {
  if (dataset.empty()) throw ConfigError(kModule, "--dataset is required");
  return fs::is_directory(dataset) ? (fs::path(dataset) / "manifest.json").string() : dataset;
}

// Written before the command starts and again when it ends.
class RunManifest {
 public:
  RunManifest(const std::string& command, const json& config, const fs::path& out_dir)
      : path_(out_dir / "run_manifest.json") {
    json seeds = json::object();
    for (const auto& [k, v] : config.items()) {
      if (k.size() >= 4 && k.compare(k.size() - 4, 4, "seed") == 0) seeds[k] = v;
    }
    doc_ = {{"format", "ecg-scalenet-run"}, {"version", 1},       {"tool_version", version()},
            {"command", command},          {"config", config},    {"seeds", seeds},
            {"artifacts", json::array()},  {"started", utc_now()}, {"finished", nullptr},
            {"status", "running"}};
    save();
  }

  void artifact(const fs::path& p) { doc_["artifacts"].push_back(p.string()); }
  void note(const std::string& key, json value) { doc_["notes"][key] = std::move(value); }

  void finish(const std::string& status, const std::string& error = "") {
    doc_["finished"] = utc_now();
    doc_["status"] = status;
    if (!error.empty()) doc_["error"] = error;
    save();
  }

 private:
  void save() { write_atomic(path_, doc_.dump(2) + "\n"); }

  fs::path path_;
  json doc_;
};

void cmd_synth(const SynthOpts& o, std::ostream& out, RunManifest& rm) {
  data::SyntheticEcgParams p;
  p.seconds = o.seconds;
  p.noise_std = o.noise;
  p.tachy_fraction = o.tachy_fraction;
  p.morphology_probability = o.morphology_probability;
  p.seed = o.seed;
  auto ds = data::generate_synthetic_dataset(p, o.records, o.labels);
  ds.manifest = data::split_dataset(ds.manifest, {o.train_ratio, o.validation_ratio, o.test_ratio}, o.seed);
  data::save_dataset(ds, o.out);
  rm.artifact(fs::path(o.out) / "manifest.json");
  out << "wrote " << ds.records.size() << " records with " << ds.manifest.labels.size() << " labels to "
      << o.out << "\n";
}

void cmd_preprocess(const PreprocessOpts& o, std::ostream& out, RunManifest& rm) {
  const auto in = data::load_dataset(manifest_path_of(o.input));
  const auto ds = data::preprocess_dataset(in, o.out, o.seed);
  rm.artifact(fs::path(o.out) / "manifest.json");
  out << "standardized " << ds.records.size() << " records to " << data::kTargetHz << " Hz, "
      << data::kTargetSeconds << " s in " << o.out << "\n";
}

void cmd_train(const TrainOpts& o, std::ostream& out, RunManifest& rm) {
  train::TrainConfig c;
  c.learning_rate = o.learning_rate;
  c.weight_decay = o.weight_decay;
  c.dropout_rate = o.dropout_rate;
  c.batch_size = o.batch_size;
  c.max_epochs = o.max_epochs;
  c.peak_epoch = o.peak_epoch;
  c.n_ops = o.n_ops;
  c.magnitude = o.magnitude;
  c.mixup_beta = o.mixup_beta;
  c.seed = o.seed;
  c.augment_seed = o.augment_seed;
  c.validate();
  const auto ds = data::load_dataset(manifest_path_of(o.dataset));
  const auto spec = net::NetworkSpec::build(net::ScaleConfig::parse(o.scale),
                                            static_cast<int>(ds.manifest.labels.size()));
  const fs::path dir(o.out);
  const auto ckpt = dir / "best.ckpt";
  const auto res = train::train_model(net::ResNet1d(spec, o.seed), train::make_train_data(ds), c,
                                      [&](int epoch, double f1) {
                                        out << "epoch " << epoch << " val_macro_f1 " << f1 << "\n";
                                        return train::Decision::proceed;
                                      },
                                      ckpt.string());
  write_atomic(dir / "train_log.jsonl", res.log.to_jsonl(false));
  json wall = json::array();
  for (const auto& e : res.log.epochs) wall.push_back(e.wall_seconds);
  rm.note("epoch_wall_seconds", wall);
  rm.artifact(ckpt);
  rm.artifact(dir / "train_log.jsonl");
  if (res.log.diverged) throw NumericError("train", "training diverged: " + res.log.message);
  out << "best val_macro_f1 " << res.log.best_f1 << " at epoch " << res.log.best_epoch << "\n";
}

hpo::SearchSpace resolve_space(const SearchOpts& o) {
  auto s = hpo::load_search_space(o.space);
  if (o.channel_divisor > 0) s.channel_divisor = o.channel_divisor;
  s.validate();
  return s;
}

train::TrainConfig base_config(const SearchOpts& o) {
  train::TrainConfig c;
  c.max_epochs = o.max_epochs;
  c.batch_size = o.batch_size;
  c.peak_epoch = o.peak_epoch;
  return c;
}

hpo::SearchOptions search_options(const SearchOpts& o) {
  hpo::SearchOptions so;
  so.grace_period = o.grace_period;
  so.reduction_factor = o.reduction_factor;
  so.sync = o.sync;
  so.workers = o.workers;
  return so;
}

void cmd_search(const SearchOpts& o, std::ostream& out, RunManifest& rm) {
  const auto space = resolve_space(o);
  const auto ds = data::load_dataset(manifest_path_of(o.dataset));
  const auto res = hpo::run_search(space, ds, o.trials, o.seed, base_config(o), search_options(o));
  const fs::path dir(o.out);
  hpo::write_results_csv(res, (dir / "results.csv").string());
  rm.artifact(dir / "results.csv");
  if (res.best_model) {
    net::save_checkpoint(*res.best_model, (dir / "best.ckpt").string());
    rm.artifact(dir / "best.ckpt");
  }
  for (const auto& [rung, n] : res.rung_counts()) out << "rung " << rung << ": " << n << " trials\n";
  const auto& top = res.trials.front();
  out << "best " << top.config.trial_id << " " << top.config.scale.to_string() << " val_macro_f1 " << top.best_f1
      << "\n";
}

void cmd_sweep(const SearchOpts& o, std::ostream& out, RunManifest& rm) {
  const auto space = resolve_space(o);
  const auto ds = data::load_dataset(manifest_path_of(o.dataset));
  hpo::SweepMode mode;
  if (o.mode == "per-cell") {
    mode = hpo::SweepMode::per_cell;
  } else if (o.mode == "shared") {
    mode = hpo::SweepMode::shared;
  } else {
    throw ConfigError(kModule, "--mode must be per-cell or shared, got '" + o.mode + "'");
  }
  const auto grid = hpo::grid_sweep(space, ds, o.trials, o.seed, mode, base_config(o), search_options(o),
                                    o.tag.empty() ? fs::path(o.dataset).filename().string() : o.tag);
  const auto paths = metrics::emit_heatmap_csv(grid, (fs::path(o.out) / "grid").string());
  for (const auto& p : paths) rm.artifact(p);
  std::size_t present = 0;
  for (const auto& [s, c] : grid.cells) present += c.f1.has_value();
  out << "sweep over " << grid.cells.size() << " cells (" << present << " with results)\n";
  for (const auto& p : paths) out << p << "\n";
}

void cmd_eval(const EvalOpts& o, std::ostream& out, RunManifest* rm) {
  const auto ds = data::load_dataset(manifest_path_of(o.dataset));
  auto model = net::load_checkpoint(o.checkpoint);
  const auto indices = ds.manifest.indices(data::parse_split(o.split));
  if (indices.empty()) throw ValidationError(kModule, "split '" + o.split + "' has no records");
  const auto table = train::evaluate(model, ds, indices, o.batch_size);
  metrics::GroupBy by;
  if (o.by == "label") {
    by = metrics::GroupBy::label;
  } else if (o.by == "category") {
    by = metrics::GroupBy::category;
  } else if (o.by == "source") {
    by = metrics::GroupBy::source;
  } else {
    throw ConfigError(kModule, "--by must be label, category or source, got '" + o.by + "'");
  }
  std::ostringstream csv;
  csv << o.by << ",f1,members\n";
  for (const auto& g : metrics::breakdown(table, by)) {
    char buf[32] = "";
    if (g.f1) std::snprintf(buf, sizeof buf, "%.4f", *g.f1);
    csv << g.group << ',' << buf << ',' << g.members << '\n';
  }
  const double macro = metrics::macro_f1(table.probabilities, table.targets).macro;
  out << "macro_f1 " << macro << " over " << indices.size() << " " << o.split << " records\n" << csv.str();
  if (rm) {
    const auto path = fs::path(o.out) / "eval.csv";
    write_atomic(path, csv.str());
    rm->artifact(path);
  }
}

void cmd_report(const ReportOpts& o, std::ostream& out, RunManifest* rm) {
  const auto grid = metrics::read_grid_long_csv(o.grid);
  std::ostringstream csv;
  csv << "axis,pearson_log2,spearman\n";
  const std::pair<metrics::Axis, const char*> axes[] = {
      {metrics::Axis::depth, "D"}, {metrics::Axis::channels, "C"}, {metrics::Axis::kernel, "K"}};
  for (const auto& [axis, name] : axes) {
    csv << name;
    for (const auto method : {metrics::CorrelationMethod::pearson_log2, metrics::CorrelationMethod::spearman}) {
      csv << ',';
      try {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", metrics::scale_correlation(grid, axis, method));
        csv << buf;
      } catch (const Error&) {
        // Undefined for this grid (single axis value or constant F1).
      }
    }
    csv << '\n';
  }
  out << csv.str();
  if (rm) {
    const fs::path dir(o.out);
    write_atomic(dir / "correlations.csv", csv.str());
    rm->artifact(dir / "correlations.csv");
    for (const auto& p : metrics::emit_heatmap_csv(grid, (dir / "report").string())) rm->artifact(p);
  }
}

void cmd_rf(const std::string& scale_text, int probe_channels, std::ostream& out) {
  const auto scale = net::ScaleConfig::parse(scale_text);
  const auto closed = net::receptive_field(net::NetworkSpec::build(scale, 1));
  // Connectivity does not depend on width, so the probe runs on a narrow copy.
  const net::ScaleConfig narrow{scale.depth, probe_channels, scale.kernel};
  const auto probed = net::probe_receptive_field_auto(net::ResNet1d(net::NetworkSpec::build(narrow, 1), 0));
  out << "scale " << scale.to_string() << "\nclosed_form " << closed << "\nprobed " << probed
      << " (probe width C=" << probe_channels << ")\nmatch " << (closed == probed ? "yes" : "no") << "\n";
  if (closed != probed) throw NumericError(kModule, "closed-form and probed receptive fields differ");
}

void cmd_augment_list(std::ostream& out) {
  out << "name,magnitude,units\n";
  for (const auto& t : augment::default_registry()) out << t.name << ',' << t.magnitude << ',' << t.units << '\n';
}

// Runs an artifact-producing command from its resolved configuration.
void execute(const std::string& command, const json& config, std::ostream& out) {
  const auto dir = prepare_out_dir(config.at("out").get<std::string>());
  RunManifest rm(command, config, dir);
  try {
    if (command == "synth") {
      cmd_synth(config.get<SynthOpts>(), out, rm);
    } else if (command == "preprocess") {
      cmd_preprocess(config.get<PreprocessOpts>(), out, rm);
    } else if (command == "train") {
      cmd_train(config.get<TrainOpts>(), out, rm);
    } else if (command == "search") {
      cmd_search(config.get<SearchOpts>(), out, rm);
    } else if (command == "sweep") {
      cmd_sweep(config.get<SearchOpts>(), out, rm);
    } else if (command == "eval") {
      cmd_eval(config.get<EvalOpts>(), out, &rm);
    } else if (command == "report") {
      cmd_report(config.get<ReportOpts>(), out, &rm);
    } else {
      throw ConfigError(kModule, "command '" + command + "' cannot be replayed");
    }
  } catch (const std::exception& e) {
    rm.finish("failed", e.what());
    throw;
  }
  rm.finish("ok");
}

void replay(const std::string& manifest_path, const std::string& out_dir, std::ostream& out) {
  std::ifstream is(manifest_path);
  if (!is) throw ConfigError(kModule, "cannot read run manifest '" + manifest_path + "'");
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(kModule, "run manifest: " + std::string(e.what()));
  }
  if (m.value("format", "") != "ecg-scalenet-run") {
    throw ParseError(kModule, "'" + manifest_path + "' is not a run manifest");
  }
  if (m.value("tool_version", "") != version()) {
    out << "note: manifest written by version " << m.value("tool_version", "?") << ", replaying with "
        << version() << "\n";
  }
  json config = m.at("config");
  config["out"] = out_dir;
  execute(m.at("command").get<std::string>(), config, out);
}

// Inputs are recorded as absolute paths so a run manifest replays from any
// working directory.
void absolutize(std::string& path) {
  if (!path.empty() && fs::exists(path)) path = fs::absolute(path).lexically_normal().string();
}

void add_search_flags(CLI::App* sc, SearchOpts& o, bool sweep) {
  sc->add_option("--dataset", o.dataset, "Dataset manifest or directory")->required();
  sc->add_option(sweep ? "--grid" : "--space", o.space,
                 "Search space: large, medium, optimal or a JSON space file")
      ->capture_default_str();
  sc->add_option("--out", o.out, "Output directory")->required();
  sc->add_option("--trials", o.trials, sweep ? "Trials per grid cell" : "Number of sampled trials")
      ->capture_default_str();
  sc->add_option("--workers", o.workers, "Concurrent trials (asynchronous mode)")->capture_default_str();
  sc->add_flag("--sync", o.sync, "Synchronous successive halving; deterministic");
  sc->add_option("--epochs", o.max_epochs, "Epoch budget per trial")->capture_default_str();
  sc->add_option("--batch-size", o.batch_size, "Batch size")->capture_default_str();
  sc->add_option("--peak-epoch", o.peak_epoch, "Epoch of the learning-rate peak")->capture_default_str();
  sc->add_option("--grace", o.grace_period, "ASHA grace period in epochs")->capture_default_str();
  sc->add_option("--eta", o.reduction_factor, "ASHA reduction factor")->capture_default_str();
  sc->add_option("--channel-divisor", o.channel_divisor, "Divide every width C by this factor (0 = from space)")
      ->capture_default_str();
  sc->add_option("--seed", o.seed, "Seed for trial sampling and training")->capture_default_str();
  if (sweep) {
    sc->add_option("--mode", o.mode, "Hyperparameter sampling: per-cell or shared")->capture_default_str();
    sc->add_option("--tag", o.tag, "Dataset tag written into the grid report");
  }
}

}  // namespace

std::string version() { return SCALENET_VERSION_STRING; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scaling-parameter study of 1D residual networks for ECG classification", "ecg_scalenet"};
  app.set_version_flag("--version", "ecg_scalenet " + version());
  app.set_config("--config", "", "TOML file of option values; command-line flags take precedence");
  app.require_subcommand(1);

  SynthOpts synth;
  auto* sc_synth = app.add_subcommand("synth", "Generate a labelled synthetic 12-lead dataset");
  sc_synth->add_option("--out", synth.out, "Output directory")->required();
  sc_synth->add_option("--records", synth.records, "Number of records")->capture_default_str();
  sc_synth->add_option("--labels", synth.labels, "Number of labels (1..6)")->capture_default_str();
  sc_synth->add_option("--seconds", synth.seconds, "Record duration in seconds")->capture_default_str();
  sc_synth->add_option("--noise", synth.noise, "White-noise standard deviation in mV")->capture_default_str();
  sc_synth->add_option("--tachy-fraction", synth.tachy_fraction, "Fraction of tachycardic records")
      ->capture_default_str();
  sc_synth->add_option("--morphology-probability", synth.morphology_probability,
                       "Probability of each morphology label")
      ->capture_default_str();
  sc_synth->add_option("--train-ratio", synth.train_ratio, "Training split fraction")->capture_default_str();
  sc_synth->add_option("--validation-ratio", synth.validation_ratio, "Validation split fraction")
      ->capture_default_str();
  sc_synth->add_option("--test-ratio", synth.test_ratio, "Test split fraction")->capture_default_str();
  sc_synth->add_option("--seed", synth.seed, "Generator and split seed")->capture_default_str();

  PreprocessOpts pre;
  auto* sc_pre = app.add_subcommand("preprocess", "Resample to 250 Hz and crop or pad to 10 s");
  sc_pre->add_option("--in", pre.input, "Input dataset manifest or directory")->required();
  sc_pre->add_option("--out", pre.out, "Output directory")->required();
  sc_pre->add_option("--seed", pre.seed, "Crop-position seed")->capture_default_str();

  TrainOpts tr;
  auto* sc_train = app.add_subcommand("train", "Train one network and keep the best validation checkpoint");
  sc_train->add_option("--dataset", tr.dataset, "Dataset manifest or directory")->required();
  sc_train->add_option("--scale", tr.scale, "Network scale D{d}-C{c}-K{k}")->capture_default_str();
  sc_train->add_option("--out", tr.out, "Output directory")->required();
  sc_train->add_option("--lr", tr.learning_rate, "learning_rate: peak one-cycle rate in [1e-4, 1e-2]")
      ->capture_default_str();
  sc_train->add_option("--wd", tr.weight_decay, "weight_decay: decoupled decay in [1e-6, 1e-4]")
      ->capture_default_str();
  sc_train->add_option("--dropout", tr.dropout_rate, "dropout_rate: one of 0, 0.05, ..., 0.3")
      ->capture_default_str();
  sc_train->add_option("--batch-size", tr.batch_size, "batch_size: records per step")->capture_default_str();
  sc_train->add_option("--epochs", tr.max_epochs, "max_epochs: epoch budget")->capture_default_str();
  sc_train->add_option("--peak-epoch", tr.peak_epoch, "peak_epoch: epoch of the learning-rate peak")
      ->capture_default_str();
  sc_train->add_option("--n-aug", tr.n_ops, "augment n_ops: transforms per record, 0..2")->capture_default_str();
  sc_train->add_option("--magnitude", tr.magnitude, "augment magnitude: 0..10")->capture_default_str();
  sc_train->add_option("--mixup-beta", tr.mixup_beta, "mixup beta: 0, 0.1 or 0.2 (0 disables)")
      ->capture_default_str();
  sc_train->add_option("--seed", tr.seed, "seed: model init, shuffling and dropout")->capture_default_str();
  sc_train->add_option("--augment-seed", tr.augment_seed, "augment_seed: augmentation and mixup")
      ->capture_default_str();

  SearchOpts search;
  auto* sc_search = app.add_subcommand("search", "Random hyperparameter search with ASHA early stopping");
  add_search_flags(sc_search, search, false);

  SearchOpts sweep;
  sweep.space = "medium";
  auto* sc_sweep = app.add_subcommand("sweep", "Best F1 for every (D, C, K) cell of a scale grid");
  add_search_flags(sc_sweep, sweep, true);

  EvalOpts ev;
  auto* sc_eval = app.add_subcommand("eval", "Macro F1 of a checkpoint with per-group breakdown");
  sc_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  sc_eval->add_option("--dataset", ev.dataset, "Dataset manifest or directory")->required();
  sc_eval->add_option("--split", ev.split, "train, validation or test")->capture_default_str();
  sc_eval->add_option("--by", ev.by, "label, category or source")->capture_default_str();
  sc_eval->add_option("--out", ev.out, "Output directory for eval.csv");
  sc_eval->add_option("--batch-size", ev.batch_size, "Inference batch size")->capture_default_str();

  std::string rf_scale;
  int rf_probe_channels = 1;
  auto* sc_rf = app.add_subcommand("rf", "Closed-form and probed receptive field");
  sc_rf->add_option("--scale", rf_scale, "Network scale D{d}-C{c}-K{k}")->required();
  sc_rf->add_option("--probe-channels", rf_probe_channels, "Width C of the probe network")->capture_default_str();

  ReportOpts rep;
  auto* sc_report = app.add_subcommand("report", "Scale correlations and heatmaps from a long-form grid CSV");
  sc_report->add_option("--grid", rep.grid, "Long-form grid CSV written by sweep")->required();
  sc_report->add_option("--out", rep.out, "Output directory");

  bool list = false;
  auto* sc_aug = app.add_subcommand("augment", "Augmentation transforms");
  sc_aug->add_flag("--list", list, "List the transform registry");

  std::string replay_manifest, replay_out;
  auto* sc_replay = app.add_subcommand("replay", "Re-run a command from its run manifest");
  sc_replay->add_option("manifest", replay_manifest, "run_manifest.json")->required();
  sc_replay->add_option("--out", replay_out, "Output directory for the replay")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (auto* p : {&pre.input, &tr.dataset, &search.dataset, &search.space, &sweep.dataset, &sweep.space,
                  &ev.checkpoint, &ev.dataset, &rep.grid}) {
    absolutize(*p);
  }
  try {
    if (*sc_synth) {
      execute("synth", synth, out);
    } else if (*sc_pre) {
      execute("preprocess", pre, out);
    } else if (*sc_train) {
      execute("train", tr, out);
    } else if (*sc_search) {
      execute("search", search, out);
    } else if (*sc_sweep) {
      execute("sweep", sweep, out);
    } else if (*sc_eval) {
      if (ev.out.empty()) {
        cmd_eval(ev, out, nullptr);
      } else {
        execute("eval", ev, out);
      }
    } else if (*sc_report) {
      if (rep.out.empty()) {
        cmd_report(rep, out, nullptr);
      } else {
        execute("report", rep, out);
      }
    } else if (*sc_rf) {
      cmd_rf(rf_scale, rf_probe_channels, out);
    } else if (*sc_aug) {
      if (!list) throw ConfigError(kModule, "augment: nothing to do (use --list)");
      cmd_augment_list(out);
    } else if (*sc_replay) {
      replay(replay_manifest, replay_out, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: [" << kModule << "] " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace scalenet::cli
