#include "scalenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "scalenet/error.hpp"

namespace scalenet::metrics {

namespace {

constexpr const char* kModule = "metrics";
constexpr const char* kLongHeader =
    "D,C,K,f1,trial_id,learning_rate,weight_decay,dropout,n_aug,magnitude,mixup_beta";

void check_matrix_pair(const Tensor& p, const Tensor& t) {
  if (p.rank() != 2 || t.rank() != 2) {
    throw ShapeError(kModule, "rank", "predictions and targets must be [records, labels]");
  }
  if (p.shape() != t.shape()) {
    throw ShapeError(kModule, "labels",
                     "predictions " + shape_to_string(p.shape()) + " vs targets " +
                         shape_to_string(t.shape()));
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(kModule, "bad number '" + s + "' in " + path);
  }
}

int parse_int(const std::string& s, const std::string& path) {
  const double v = parse_double(s, path);
  if (v != std::floor(v)) throw ParseError(kModule, "bad integer '" + s + "' in " + path);
  return static_cast<int>(v);
}

void write_text(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(kModule, "cannot write '" + path + "'");
    os << text;
    if (!os) throw Error(kModule, "failed writing '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

ConfusionCounts confusion_counts(const Tensor& probabilities, const Tensor& targets, double threshold) {
  check_matrix_pair(probabilities, targets);
  const std::size_t n = targets.dim(0), labels = targets.dim(1);
  ConfusionCounts c;
  c.per_label.resize(labels);
  c.records = n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < labels; ++l) {
      const double t = targets.at(i, l);
      if (t != 0.0 && t != 1.0) {
        throw ValidationError(kModule, "target value " + std::to_string(t) + " is not 0 or 1");
      }
      const bool pred = probabilities.at(i, l) >= threshold;
      auto& k = c.per_label[l];
      if (pred && t == 1.0) ++k.tp;
      else if (pred) ++k.fp;
      else if (t == 1.0) ++k.fn;
      else ++k.tn;
    }
  }
  return c;
}

double f1_score(const LabelCounts& c) {
  const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

F1Result macro_f1(const ConfusionCounts& counts) {
  if (counts.records == 0 || counts.per_label.empty()) {
    throw ValidationError(kModule, "macro F1 of an empty prediction set");
  }
  F1Result r;
  for (const auto& c : counts.per_label) r.per_label.push_back(f1_score(c));
  r.macro = std::accumulate(r.per_label.begin(), r.per_label.end(), 0.0) /
            static_cast<double>(r.per_label.size());
  return r;
}

F1Result macro_f1(const Tensor& probabilities, const Tensor& targets, double threshold) {
  return macro_f1(confusion_counts(probabilities, targets, threshold));
}

std::vector<GroupScore> breakdown(const EvalTable& table, GroupBy by,
                                  const std::vector<std::string>& groups, double threshold) {
  check_matrix_pair(table.probabilities, table.targets);
  if (table.labels.size() != table.targets.dim(1)) {
    throw ShapeError(kModule, "labels", "label names do not match the target width");
  }
  std::vector<GroupScore> out;

  if (by == GroupBy::label || by == GroupBy::category) {
    const auto per_label = macro_f1(table.probabilities, table.targets, threshold).per_label;
    if (by == GroupBy::label) {
      const auto names = groups.empty() ? table.labels : groups;
      for (const auto& g : names) {
        const auto it = std::find(table.labels.begin(), table.labels.end(), g);
        if (it == table.labels.end()) {
          out.push_back({g, std::nullopt, 0});
        } else {
          out.push_back({g, per_label[static_cast<std::size_t>(it - table.labels.begin())], 1});
        }
      }
      return out;
    }
    std::vector<std::string> names = groups;
    if (names.empty()) {
      std::set<std::string> seen;
      for (const auto& l : table.labels) {
        const auto it = table.categories.find(l);
        if (it != table.categories.end() && seen.insert(it->second).second) names.push_back(it->second);
      }
    }
    for (const auto& g : names) {
      double sum = 0.0;
      std::size_t members = 0;
      for (std::size_t l = 0; l < table.labels.size(); ++l) {
        const auto it = table.categories.find(table.labels[l]);
        if (it != table.categories.end() && it->second == g) {
          sum += per_label[l];
          ++members;
        }
      }
      out.push_back({g, members ? std::optional<double>(sum / static_cast<double>(members)) : std::nullopt,
                     members});
    }
    return out;
  }

  if (table.sources.size() != table.targets.dim(0)) {
    throw ShapeError(kModule, "records", "source tags do not match the record count");
  }
  std::vector<std::string> names = groups;
  if (names.empty()) {
    std::set<std::string> seen;
    for (const auto& s : table.sources) {
      if (seen.insert(s).second) names.push_back(s);
    }
  }
  const std::size_t labels = table.labels.size();
  for (const auto& g : names) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < table.sources.size(); ++i) {
      if (table.sources[i] == g) rows.push_back(i);
    }
    if (rows.empty()) {
      out.push_back({g, std::nullopt, 0});
      continue;
    }
    Tensor p({rows.size(), labels}), t({rows.size(), labels});
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (std::size_t l = 0; l < labels; ++l) {
        p.at(k, l) = table.probabilities.at(rows[k], l);
        t.at(k, l) = table.targets.at(rows[k], l);
      }
    }
    out.push_back({g, macro_f1(p, t, threshold).macro, rows.size()});
  }
  return out;
}

GridCell GridReport::cell(const net::ScaleConfig& s) const {
  const auto it = cells.find(s);
  return it == cells.end() ? GridCell{} : it->second;
}

void GridReport::set(const net::ScaleConfig& s, GridCell c) { cells[s] = std::move(c); }

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ConfigError(kModule, "correlation needs two equally long series of at least 2 points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericError(kModule, "correlation undefined for a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double scale_correlation(const GridReport& grid, Axis axis, CorrelationMethod method) {
  std::vector<double> x, y;
  std::set<int> distinct;
  for (const auto& [scale, cell] : grid.cells) {
    if (!cell.f1) continue;
    const int v = axis == Axis::depth ? scale.depth : axis == Axis::channels ? scale.channels : scale.kernel;
    distinct.insert(v);
    x.push_back(static_cast<double>(v));
    y.push_back(*cell.f1);
  }
  if (distinct.size() < 2) throw ConfigError(kModule, "correlation needs at least two distinct axis values");
  if (method == CorrelationMethod::pearson_log2) {
    for (auto& v : x) v = std::log2(v);
    return pearson(x, y);
  }
  return pearson(ranks(x), ranks(y));
}

std::vector<std::string> emit_heatmap_csv(const GridReport& grid, const std::string& prefix) {
  std::vector<std::string> paths;
  const auto parent = std::filesystem::path(prefix).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  for (int k : grid.kernels) {
    std::ostringstream os;
    os << "D\\C";
    for (int c : grid.channels) os << ',' << c;
    os << '\n';
    for (int d : grid.depths) {
      os << d;
      for (int c : grid.channels) {
        os << ',';
        const auto cell = grid.cell({d, c, k});
        if (cell.f1) os << fixed(*cell.f1, 4);
      }
      os << '\n';
    }
    const std::string path = prefix + "_K" + std::to_string(k) + ".csv";
    write_text(path, os.str());
    paths.push_back(path);
  }
  std::ostringstream os;
  os << "# dataset=" << grid.dataset << " filter=" << grid.filter << '\n' << kLongHeader << '\n';
  for (int d : grid.depths) {
    for (int c : grid.channels) {
      for (int k : grid.kernels) {
        const auto cell = grid.cell({d, c, k});
        os << d << ',' << c << ',' << k << ',';
        if (cell.f1) os << exact(*cell.f1);
        if (cell.winner) {
          const auto& w = *cell.winner;
          os << ',' << w.trial_id << ',' << exact(w.learning_rate) << ',' << exact(w.weight_decay) << ','
             << exact(w.dropout) << ',' << w.n_aug << ',' << w.magnitude << ',' << exact(w.mixup_beta);
        } else {
          os << ",,,,,,,";
        }
        os << '\n';
      }
    }
  }
  const std::string path = prefix + "_long.csv";
  write_text(path, os.str());
  paths.push_back(path);
  return paths;
}

GridReport read_grid_long_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError(kModule, "grid file '" + path + "' not found");
  GridReport g;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# dataset=", 0) != 0) {
    throw ParseError(kModule, "'" + path + "' lacks the grid preamble");
  }
  const auto filter_at = line.find(" filter=");
  if (filter_at == std::string::npos) throw ParseError(kModule, "'" + path + "' lacks the grid preamble");
  g.dataset = line.substr(10, filter_at - 10);
  g.filter = line.substr(filter_at + 8);
  if (!std::getline(is, line) || line != kLongHeader) {
    throw ParseError(kModule, "'" + path + "' has an unexpected header");
  }
  std::set<int> ds, cs, ks;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw ParseError(kModule, "bad grid row '" + line + "' in " + path);
    const net::ScaleConfig s{parse_int(f[0], path), parse_int(f[1], path), parse_int(f[2], path)};
    ds.insert(s.depth);
    cs.insert(s.channels);
    ks.insert(s.kernel);
    GridCell cell;
    if (!f[3].empty()) cell.f1 = parse_double(f[3], path);
    if (!f[4].empty()) {
      cell.winner = TrialSummary{f[4],
                                 parse_double(f[5], path),
                                 parse_double(f[6], path),
                                 parse_double(f[7], path),
                                 parse_int(f[8], path),
                                 parse_int(f[9], path),
                                 parse_double(f[10], path)};
    }
    if (cell.f1 || cell.winner) g.set(s, cell);
  }
  g.depths.assign(ds.begin(), ds.end());
  g.channels.assign(cs.begin(), cs.end());
  g.kernels.assign(ks.begin(), ks.end());
  return g;
}

std::map<int, std::map<int, double>> read_heatmap_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError(kModule, "heatmap '" + path + "' not found");
  std::string line;
  if (!std::getline(is, line)) throw ParseError(kModule, "empty heatmap '" + path + "'");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "D\\C") throw ParseError(kModule, "bad heatmap header in " + path);
  std::map<int, std::map<int, double>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw ParseError(kModule, "ragged heatmap row in " + path);
    const int d = parse_int(f[0], path);
    auto& row = out[d];
    for (std::size_t i = 1; i < f.size(); ++i) {
      if (!f[i].empty()) row[parse_int(header[i], path)] = parse_double(f[i], path);
    }
  }
  return out;
}

}  // namespace scalenet::metrics
