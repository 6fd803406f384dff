#include "scalenet/ecg_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <set>

#include "scalenet/error.hpp"

namespace scalenet::data {

namespace {

constexpr const char* kModule = "ecg_data";
constexpr char kRecordMagic[4] = {'E', 'C', 'G', 'R'};
constexpr std::uint16_t kRecordVersion = 1;
constexpr std::size_t kRecordHeaderBytes = 16;
constexpr const char* kManifestFormat = "ecg-scalenet-manifest";
constexpr int kManifestVersion = 1;

namespace fs = std::filesystem;
using nlohmann::json;

void put_le(std::vector<unsigned char>& buf, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) buf.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

void copy_lead(const Tensor& from, std::size_t src, Tensor& to, std::size_t dst) {
  const auto in = from.row(src);
  std::copy(in.begin(), in.end(), to.row(dst).begin());
}

void write_lead(Tensor& to, std::size_t dst, const std::vector<double>& values) {
  std::copy(values.begin(), values.end(), to.row(dst).begin());
}

}  // namespace

const std::array<std::string_view, kNumLeads>& lead_names() {
  static const std::array<std::string_view, kNumLeads> names = {
      "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};
  return names;
}

void EcgRecord::validate() const {
  if (signal.rank() != 2) {
    throw ShapeError(kModule, "rank", "record '" + record_id + "' signal must be [leads, samples]");
  }
  const auto n = leads();
  if (n != 2 && n != 8 && n != 12) {
    throw ShapeError(kModule, "leads",
                     "record '" + record_id + "' has " + std::to_string(n) + " leads, expected 2, 8 or 12");
  }
  if (sampling_rate_hz <= 0) {
    throw ValidationError(kModule, "record '" + record_id + "' has non-positive sampling rate");
  }
  if (!signal.all_finite()) {
    throw ValidationError(kModule, "record '" + record_id + "' contains NaN or infinite samples");
  }
  for (auto v : labels) {
    if (v > 1) throw ValidationError(kModule, "record '" + record_id + "' labels must be 0/1");
  }
}

LimbLeads derive_limb_leads(std::span<const double> lead_i, std::span<const double> lead_ii) {
  if (lead_i.size() != lead_ii.size()) {
    throw ShapeError(kModule, "samples",
                     "lead I has " + std::to_string(lead_i.size()) + " samples, lead II has " +
                         std::to_string(lead_ii.size()));
  }
  const std::size_t n = lead_i.size();
  LimbLeads out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
                std::vector<double>(n)};
  for (std::size_t t = 0; t < n; ++t) {
    const double a = lead_i[t], b = lead_ii[t];
    out.iii[t] = b - a;
    out.avr[t] = -(a + b) / 2.0;
    out.avl[t] = a - b / 2.0;
    out.avf[t] = b - a / 2.0;
  }
  return out;
}

EcgRecord to_twelve_lead(const EcgRecord& r) {
  r.validate();
  if (r.leads() == kNumLeads) return r;
  EcgRecord out = r;
  out.signal = Tensor({kNumLeads, r.samples()});
  copy_lead(r.signal, 0, out.signal, 0);
  copy_lead(r.signal, 1, out.signal, 1);
  const auto limb = derive_limb_leads(r.signal.row(0), r.signal.row(1));
  write_lead(out.signal, 2, limb.iii);
  write_lead(out.signal, 3, limb.avr);
  write_lead(out.signal, 4, limb.avl);
  write_lead(out.signal, 5, limb.avf);
  if (r.leads() == 8) {
    for (std::size_t v = 0; v < 6; ++v) copy_lead(r.signal, 2 + v, out.signal, 6 + v);
  }
  return out;
}

Tensor resample_linear(const Tensor& signal, int from_hz, int to_hz) {
  if (from_hz <= 0 || to_hz <= 0) throw ConfigError(kModule, "sampling rates must be positive");
  if (signal.rank() != 2) throw ShapeError(kModule, "rank", "resample expects [leads, samples]");
  if (from_hz == to_hz) return signal;
  const std::size_t n = signal.dim(1);
  const std::size_t n_out =
      static_cast<std::size_t>((static_cast<std::uint64_t>(n - 1) * to_hz) / from_hz) + 1;
  Tensor out({signal.dim(0), n_out});
  const double step = static_cast<double>(from_hz) / to_hz;
  for (std::size_t lead = 0; lead < signal.dim(0); ++lead) {
    const auto in = signal.row(lead);
    auto dst = out.row(lead);
    for (std::size_t j = 0; j < n_out; ++j) {
      const double x = static_cast<double>(j) * step;
      const auto i0 = std::min(static_cast<std::size_t>(x), n - 1);
      const double frac = x - static_cast<double>(i0);
      dst[j] = (i0 + 1 < n && frac > 0.0) ? in[i0] + frac * (in[i0 + 1] - in[i0]) : in[i0];
    }
  }
  return out;
}

EcgRecord standardize(const EcgRecord& r, Rng& rng, int target_seconds, int target_hz) {
  if (target_seconds <= 0 || target_hz <= 0) {
    throw ConfigError(kModule, "target duration and rate must be positive");
  }
  if (r.signal.empty()) throw ValidationError(kModule, "record '" + r.record_id + "' is empty");
  EcgRecord full = to_twelve_lead(r);
  const Tensor resampled = resample_linear(full.signal, full.sampling_rate_hz, target_hz);
  const std::size_t target = static_cast<std::size_t>(target_seconds) * target_hz;
  const std::size_t n = resampled.dim(1);

  EcgRecord out = std::move(full);
  out.sampling_rate_hz = target_hz;
  out.signal = Tensor({kNumLeads, target});
  const std::size_t start = n > target ? rng.index(n - target + 1) : 0;
  const std::size_t count = std::min(n, target);
  for (std::size_t lead = 0; lead < kNumLeads; ++lead) {
    const auto in = resampled.row(lead);
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(start), count, out.signal.row(lead).begin());
  }
  return out;
}

EcgRecord crop_for_analysis(const EcgRecord& r, double seconds, Rng& rng) {
  if (!(seconds > 0.0)) throw ConfigError(kModule, "crop duration must be positive");
  const auto window = static_cast<std::size_t>(std::llround(seconds * r.sampling_rate_hz));
  if (window == 0 || window > r.samples()) {
    throw ValidationError(kModule, "record '" + r.record_id + "' is shorter than the " +
                                       std::to_string(seconds) + " s crop");
  }
  const std::size_t start = rng.index(r.samples() - window + 1);
  EcgRecord out = r;
  out.signal = Tensor({r.leads(), window});
  for (std::size_t lead = 0; lead < r.leads(); ++lead) {
    const auto in = r.signal.row(lead);
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(start), window, out.signal.row(lead).begin());
  }
  return out;
}

const std::map<std::string, std::string>& physionet_taxonomy() {
  static const std::map<std::string, std::string> taxonomy = [] {
    std::map<std::string, std::string> m;
    auto add = [&](std::string_view category, std::initializer_list<const char*> labels) {
      for (const char* l : labels) m.emplace(l, category);
    };
    add("Arrhythmia", {"AF", "AFL", "SA", "SB", "STach", "PAC", "PVC"});
    add("Conduction disorder", {"BBB", "LBBB", "RBBB", "1AVB", "IRBBB", "NSIVCB", "LAnFB"});
    add("Axis deviation", {"LAD", "RAD"});
    add("Prolonged interval", {"LPR", "LQT"});
    add("Wave abnormality", {"LQRSV", "PRWP", "QAb", "TAb", "TInv"});
    add("Others", {"NSR", "Brady", "PR"});
    return m;
  }();
  return taxonomy;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::unassigned: return "unassigned";
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unassigned";
}

Split parse_split(std::string_view text) {
  for (Split s : {Split::unassigned, Split::train, Split::validation, Split::test}) {
    if (text == to_string(s)) return s;
  }
  throw ParseError(kModule, "unknown split '" + std::string(text) + "'");
}

void DatasetManifest::validate() const {
  std::set<std::string_view> known;
  for (const auto& l : labels) {
    if (!known.insert(l).second) throw ValidationError(kModule, "duplicate label '" + l + "'");
    if (!categories.count(l)) throw ValidationError(kModule, "label '" + l + "' has no category");
  }
  std::set<std::string_view> ids;
  for (const auto& e : records) {
    if (e.id.empty()) throw ValidationError(kModule, "record with empty id");
    if (!ids.insert(e.id).second) throw ValidationError(kModule, "duplicate record id '" + e.id + "'");
    for (const auto& l : e.labels) {
      if (!known.count(l)) {
        throw ValidationError(kModule, "record '" + e.id + "' has unknown label '" + l + "'");
      }
    }
  }
}

std::size_t DatasetManifest::label_index(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw ValidationError(kModule, "unknown label '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

std::vector<std::uint8_t> DatasetManifest::multi_hot(const RecordEntry& e) const {
  std::vector<std::uint8_t> v(labels.size(), 0);
  for (const auto& l : e.labels) v[label_index(l)] = 1;
  return v;
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == s) out.push_back(i);
  }
  return out;
}

std::string DatasetManifest::category_of(std::string_view label) const {
  const auto it = categories.find(std::string(label));
  if (it == categories.end()) {
    throw ValidationError(kModule, "label '" + std::string(label) + "' has no category");
  }
  return it->second;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r = {ratios.train, ratios.validation, ratios.test};
  for (double v : r) {
    if (!(v >= 0.0)) throw ConfigError(kModule, "split ratios must be non-negative");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw ConfigError(kModule, "split ratios must sum to 1");
  }
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * r[i];
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (remainder[i] > remainder[best] + 1e-12) best = i;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

DatasetManifest split_dataset(DatasetManifest manifest, const SplitRatios& ratios,
                              std::uint64_t seed) {
  if (manifest.records.empty()) throw ValidationError(kModule, "cannot split an empty manifest");
  const std::size_t n = manifest.records.size();
  const auto counts = split_counts(n, ratios);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::stream(seed, "split");
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  for (std::size_t k = 0; k < n; ++k) {
    const Split s = k < counts[0]               ? Split::train
                    : k < counts[0] + counts[1] ? Split::validation
                                                : Split::test;
    manifest.records[order[k]].split = s;
  }
  return manifest;
}

void write_record(const EcgRecord& r, const std::string& path) {
  r.validate();
  std::vector<unsigned char> buf(kRecordMagic, kRecordMagic + 4);
  buf.reserve(kRecordHeaderBytes + 4 * r.signal.size());
  put_le(buf, kRecordVersion, 2);
  put_le(buf, r.leads(), 2);
  put_le(buf, r.samples(), 4);
  put_le(buf, static_cast<std::uint32_t>(r.sampling_rate_hz), 4);
  for (double v : r.signal.data()) put_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(kModule, "cannot write record '" + path + "'");
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw Error(kModule, "failed writing record '" + path + "'");
  }
  fs::rename(tmp, path);
}

EcgRecord read_record(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError(kModule, "record file '" + path + "' not found");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < kRecordHeaderBytes) {
    throw ParseError(kModule, "record '" + path + "' truncated in header");
  }
  if (!std::equal(kRecordMagic, kRecordMagic + 4, buf.begin())) {
    throw ParseError(kModule, "'" + path + "' is not an ECG record");
  }
  const auto version = get_le(&buf[4], 2);
  if (version != kRecordVersion) {
    throw ParseError(kModule, "unsupported record version " + std::to_string(version));
  }
  const auto leads = static_cast<std::size_t>(get_le(&buf[6], 2));
  const auto samples = static_cast<std::size_t>(get_le(&buf[8], 4));
  const auto rate = static_cast<int>(get_le(&buf[12], 4));
  if (leads == 0 || samples == 0) throw ParseError(kModule, "record '" + path + "' has zero extent");
  const std::size_t expected = kRecordHeaderBytes + 4 * leads * samples;
  if (buf.size() != expected) {
    throw ParseError(kModule, "record '" + path + "' has " + std::to_string(buf.size()) +
                                  " bytes, header implies " + std::to_string(expected));
  }
  EcgRecord r;
  r.sampling_rate_hz = rate;
  r.signal = Tensor({leads, samples});
  auto data = r.signal.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(&buf[kRecordHeaderBytes + 4 * i], 4)));
  }
  r.record_id = fs::path(path).stem().string();
  return r;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  m.validate();
  json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["labels"] = m.labels;
  j["categories"] = m.categories;
  j["records"] = json::array();
  for (const auto& e : m.records) {
    j["records"].push_back({{"id", e.id},
                            {"path", e.path},
                            {"source", e.source},
                            {"labels", e.labels},
                            {"split", to_string(e.split)}});
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw Error(kModule, "cannot write manifest '" + path + "'");
    os << j.dump(1) << '\n';
    if (!os) throw Error(kModule, "failed writing manifest '" + path + "'");
  }
  fs::rename(tmp, path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError(kModule, "manifest '" + path + "' not found");
  DatasetManifest m;
  try {
    const json j = json::parse(is);
    if (j.at("format") != kManifestFormat) throw ParseError(kModule, "'" + path + "' is not a manifest");
    if (j.at("version") != kManifestVersion) {
      throw ParseError(kModule, "unsupported manifest version in '" + path + "'");
    }
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.categories = j.at("categories").get<std::map<std::string, std::string>>();
    for (const auto& r : j.at("records")) {
      RecordEntry e;
      e.id = r.at("id").get<std::string>();
      e.path = r.at("path").get<std::string>();
      e.source = r.value("source", "");
      e.labels = r.at("labels").get<std::vector<std::string>>();
      e.split = parse_split(r.value("split", "unassigned"));
      m.records.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(kModule, "bad manifest '" + path + "': " + e.what());
  }
  m.validate();
  return m;
}

void save_dataset(Dataset& ds, const std::string& dir) {
  if (ds.records.size() != ds.manifest.records.size()) {
    throw ValidationError(kModule, "dataset records and manifest entries disagree in count");
  }
  fs::create_directories(fs::path(dir) / "records");
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    auto& e = ds.manifest.records[i];
    e.path = "records/" + e.id + ".ecgr";
    write_record(ds.records[i], (fs::path(dir) / e.path).string());
  }
  write_manifest(ds.manifest, (fs::path(dir) / "manifest.json").string());
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  ds.records.reserve(ds.manifest.records.size());
  for (const auto& e : ds.manifest.records) {
    const auto path = (base / e.path).string();
    if (!fs::exists(path)) {
      throw ValidationError(kModule, "manifest references missing record '" + e.id + "' at " + path);
    }
    EcgRecord r = read_record(path);
    r.record_id = e.id;
    r.source = e.source;
    r.labels = ds.manifest.multi_hot(e);
    r.validate();
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset preprocess_dataset(const Dataset& in, const std::string& out_dir, std::uint64_t seed) {
  Dataset out;
  out.manifest = in.manifest;
  out.records.reserve(in.records.size());
  for (std::size_t i = 0; i < in.records.size(); ++i) {
    Rng rng = Rng::stream(seed, "crop", i);
    out.records.push_back(standardize(in.records[i], rng));
  }
  save_dataset(out, out_dir);
  return out;
}

void SyntheticEcgParams::validate() const {
  if (!(normal_hr_min > 0 && normal_hr_min < normal_hr_max && tachy_hr_min < tachy_hr_max &&
        tachy_hr_min > 0)) {
    throw ConfigError(kModule, "heart-rate ranges must be positive and non-empty");
  }
  if (!(tachy_fraction >= 0 && tachy_fraction <= 1 && morphology_probability >= 0 &&
        morphology_probability <= 1)) {
    throw ConfigError(kModule, "synthetic probabilities must lie in [0, 1]");
  }
  if (!(noise_std >= 0)) throw ConfigError(kModule, "noise_std must be non-negative");
  if (sampling_rate_hz <= 0 || !(seconds > 0)) {
    throw ConfigError(kModule, "synthetic rate and duration must be positive");
  }
  if (sources.empty()) throw ConfigError(kModule, "at least one synthetic source is required");
}

double tachycardia_prevalence(const SyntheticEcgParams& p) {
  auto above = [](double lo, double hi) { return std::clamp((hi - 100.0) / (hi - lo), 0.0, 1.0); };
  return (1.0 - p.tachy_fraction) * above(p.normal_hr_min, p.normal_hr_max) +
         p.tachy_fraction * above(p.tachy_hr_min, p.tachy_hr_max);
}

namespace {

// Adds amplitude * exp(-(t - centre)^2 / (2 sigma^2)) within +-5 sigma.
void add_bump(std::vector<double>& wave, double rate, double centre, double sigma, double amplitude) {
  const auto n = static_cast<std::ptrdiff_t>(wave.size());
  const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::floor((centre - 5 * sigma) * rate)));
  const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::ceil((centre + 5 * sigma) * rate)));
  for (std::ptrdiff_t i = lo; i <= hi; ++i) {
    const double dt = static_cast<double>(i) / rate - centre;
    wave[static_cast<std::size_t>(i)] += amplitude * std::exp(-dt * dt / (2 * sigma * sigma));
  }
}

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

}  // namespace

Dataset generate_synthetic_dataset(const SyntheticEcgParams& p, std::size_t n_records, int n_labels) {
  p.validate();
  if (n_labels < 1 || n_labels > static_cast<int>(kSyntheticLabels.size())) {
    throw ConfigError(kModule, "synthetic n_labels must lie in 1.." +
                                   std::to_string(kSyntheticLabels.size()));
  }
  if (n_records == 0) throw ConfigError(kModule, "n_records must be positive");

  Dataset ds;
  const auto& taxonomy = physionet_taxonomy();
  for (int l = 0; l < n_labels; ++l) {
    const std::string name(kSyntheticLabels[l]);
    ds.manifest.labels.push_back(name);
    ds.manifest.categories[name] = taxonomy.at(name);
  }

  const double rate = p.sampling_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(p.seconds * rate));
  const double qrs_gain[6] = {-0.7, -0.4, 0.1, 0.6, 1.0, 0.8};
  const double t_gain[6] = {-0.2, 0.3, 0.6, 0.7, 0.6, 0.5};

  for (std::size_t i = 0; i < n_records; ++i) {
    Rng rng = Rng::stream(p.seed, "synth", i);
    const bool tachy_component = rng.bernoulli(p.tachy_fraction);
    const double hr = tachy_component ? rng.uniform(p.tachy_hr_min, p.tachy_hr_max)
                                      : rng.uniform(p.normal_hr_min, p.normal_hr_max);
    std::array<bool, 6> rule{};
    rule[0] = hr > 100.0;
    for (int l = 1; l < 6; ++l) rule[l] = rng.bernoulli(p.morphology_probability) && l < n_labels;
    const std::size_t source = rng.index(p.sources.size());

    const double amplitude = rng.uniform(0.8, 1.2);
    const double qrs_axis = rule[2] ? rng.uniform(-75.0, -35.0) : rng.uniform(15.0, 75.0);
    const double p_axis = rng.uniform(40.0, 70.0);
    const double t_axis = rng.uniform(20.0, 60.0);
    const double qrs_sigma = rule[1] ? rng.uniform(0.028, 0.036) : rng.uniform(0.010, 0.014);
    const double pr = rule[3] ? rng.uniform(0.26, 0.30) : rng.uniform(0.12, 0.18);
    const double t_sign = rule[4] ? -1.0 : 1.0;
    const double noise = p.noise_std * (1.0 + 0.5 * static_cast<double>(source));

    // Scalar wave components, later projected onto each lead.
    std::vector<double> pw(n, 0.0), qrs(n, 0.0), tw(n, 0.0), pace(n, 0.0);
    const double rr = 60.0 / hr;
    const double qt = 0.40 * std::sqrt(rr);
    for (double beat = rng.uniform(0.0, rr) - rr; beat < p.seconds + 1.0;
         beat += rr * (1.0 + 0.02 * rng.normal())) {
      add_bump(pw, rate, beat - pr, 0.025, 0.15);
      add_bump(qrs, rate, beat - 2.0 * qrs_sigma, qrs_sigma, -0.15);
      add_bump(qrs, rate, beat, qrs_sigma, 1.0);
      add_bump(qrs, rate, beat + 2.0 * qrs_sigma, qrs_sigma, -0.3);
      add_bump(tw, rate, beat + qt - 0.08, 0.045, 0.3 * t_sign);
      if (rule[5]) add_bump(pace, rate, beat - 0.05, 0.004, 2.0);
    }

    EcgRecord r;
    r.sampling_rate_hz = p.sampling_rate_hz;
    r.signal = Tensor({kNumLeads, n});
    auto frontal = [&](double angle_offset, std::size_t lead) {
      const double cp = std::cos(radians(p_axis - angle_offset));
      const double cq = std::cos(radians(qrs_axis - angle_offset));
      const double ct = std::cos(radians(t_axis - angle_offset));
      const double wander_phase = rng.uniform(0.0, 2 * std::numbers::pi);
      const double wander_hz = rng.uniform(0.1, 0.4);
      auto dst = r.signal.row(lead);
      for (std::size_t s = 0; s < n; ++s) {
        const double t = static_cast<double>(s) / rate;
        dst[s] = amplitude * (cp * pw[s] + cq * qrs[s] + ct * tw[s]) + pace[s] +
                 0.05 * std::sin(2 * std::numbers::pi * wander_hz * t + wander_phase) +
                 noise * rng.normal();
      }
    };
    frontal(0.0, 0);
    frontal(60.0, 1);
    const auto limb = derive_limb_leads(r.signal.row(0), r.signal.row(1));
    write_lead(r.signal, 2, limb.iii);
    write_lead(r.signal, 3, limb.avr);
    write_lead(r.signal, 4, limb.avl);
    write_lead(r.signal, 5, limb.avf);
    for (std::size_t v = 0; v < 6; ++v) {
      auto dst = r.signal.row(6 + v);
      for (std::size_t s = 0; s < n; ++s) {
        dst[s] = amplitude * (0.5 * pw[s] + qrs_gain[v] * qrs[s] + t_gain[v] * tw[s]) + pace[s] +
                 noise * rng.normal();
      }
    }

    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", i);
    r.record_id = id;
    r.source = p.sources[source];
    r.labels.assign(static_cast<std::size_t>(n_labels), 0);
    RecordEntry e;
    e.id = r.record_id;
    e.path = "records/" + e.id + ".ecgr";
    e.source = r.source;
    for (int l = 0; l < n_labels; ++l) {
      if (rule[l]) {
        r.labels[l] = 1;
        e.labels.emplace_back(kSyntheticLabels[l]);
      }
    }
    ds.records.push_back(std::move(r));
    ds.manifest.records.push_back(std::move(e));
  }
  return ds;
}

Batch make_batch(const std::vector<EcgRecord>& records, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError(kModule, "batch must contain at least one record");
  const auto& first = records.at(indices[0]);
  const std::size_t length = first.samples();
  const std::size_t labels = first.labels.size();
  Batch b{Tensor({indices.size(), kNumLeads, length}), Tensor({indices.size(), labels})};
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& r = records.at(indices[k]);
    if (r.leads() != kNumLeads || r.samples() != length) {
      throw ShapeError(kModule, "samples",
                       "record '" + r.record_id + "' is not standardized to [12, " +
                           std::to_string(length) + "]");
    }
    if (r.labels.size() != labels) {
      throw ShapeError(kModule, "labels", "record '" + r.record_id + "' label width differs");
    }
    const auto src = r.signal.data();
    std::copy(src.begin(), src.end(), b.inputs.row(k).begin());
    for (std::size_t l = 0; l < labels; ++l) b.targets.at(k, l) = r.labels[l];
  }
  return b;
}

}  // namespace scalenet::data
