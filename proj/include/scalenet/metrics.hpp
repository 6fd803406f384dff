#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scalenet/network_spec.hpp"
#include "scalenet/tensor.hpp"

namespace scalenet::metrics {

struct LabelCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ConfusionCounts {
  std::vector<LabelCounts> per_label;
  std::size_t records = 0;
};

// probabilities and targets are [records, labels]; targets must be 0 or 1.
// A prediction is positive when probability >= threshold.
ConfusionCounts confusion_counts(const Tensor& probabilities, const Tensor& targets,
                                 double threshold = 0.5);

// 2TP / (2TP + FP + FN); 1 when TP = FP = FN = 0.
double f1_score(const LabelCounts& c);

struct F1Result {
  double macro = 0.0;
  std::vector<double> per_label;
};

F1Result macro_f1(const ConfusionCounts& counts);
F1Result macro_f1(const Tensor& probabilities, const Tensor& targets, double threshold = 0.5);

// Everything a breakdown needs about one evaluated split.
struct EvalTable {
  Tensor probabilities;              // [records, labels]
  Tensor targets;                    // [records, labels]
  std::vector<std::string> labels;   // label names, column order
  std::map<std::string, std::string> categories;  // label -> category
  std::vector<std::string> sources;  // per record
};

enum class GroupBy { label, category, source };

struct GroupScore {
  std::string group;
  std::optional<double> f1;  // empty when the group has no labels/records
  std::size_t members = 0;   // labels (label/category) or records (source)
};

// label: per-label F1. category: unweighted mean of member-label F1.
// source: macro F1 over the records of that source. `groups` lists the groups
// to report, in order; empty means every group present in the table.
std::vector<GroupScore> breakdown(const EvalTable& table, GroupBy by,
                                  const std::vector<std::string>& groups = {},
                                  double threshold = 0.5);

// Hyperparameters of the trial that produced a grid cell.
struct TrialSummary {
  std::string trial_id;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double dropout = 0.0;
  int n_aug = 0;
  int magnitude = 0;
  double mixup_beta = 0.0;
};

struct GridCell {
  std::optional<double> f1;
  std::optional<TrialSummary> winner;
};

struct GridReport {
  std::vector<int> depths, channels, kernels;
  std::string dataset;
  std::string filter;  // optional label/category/source restriction
  std::map<net::ScaleConfig, GridCell> cells;

  // Missing cells read as empty.
  GridCell cell(const net::ScaleConfig& s) const;
  void set(const net::ScaleConfig& s, GridCell c);
};

enum class Axis { depth, channels, kernel };
enum class CorrelationMethod { pearson_log2, spearman };

// Pairs (axis value, F1) over every present cell. Fewer than two distinct
// axis values is a ConfigError; constant F1 or constant axis is a
// NumericError.
double scale_correlation(const GridReport& grid, Axis axis, CorrelationMethod method);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
// Average ranks for ties.
std::vector<double> ranks(const std::vector<double>& v);

// Writes `<prefix>_K<k>.csv` per kernel (rows D, columns C, 4-decimal F1,
// empty for missing cells) and `<prefix>_long.csv` with one row per cell.
// Returns the written paths, heatmaps first.
std::vector<std::string> emit_heatmap_csv(const GridReport& grid, const std::string& prefix);
// Parses a long-form CSV back into a grid.
GridReport read_grid_long_csv(const std::string& path);
// Parses one heatmap CSV: D -> C -> F1 (missing cells absent).
std::map<int, std::map<int, double>> read_heatmap_csv(const std::string& path);

}  // namespace scalenet::metrics
