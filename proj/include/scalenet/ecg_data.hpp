#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalenet/rng.hpp"
#include "scalenet/tensor.hpp"

namespace scalenet::data {

inline constexpr int kTargetHz = 250;
inline constexpr int kTargetSeconds = 10;
inline constexpr int kNumLeads = 12;

// I, II, III, aVR, aVL, aVF, V1..V6.
const std::array<std::string_view, kNumLeads>& lead_names();

struct EcgRecord {
  Tensor signal;  // [leads, samples]
  int sampling_rate_hz = kTargetHz;
  std::vector<std::uint8_t> labels;  // multi-hot over the dataset label list
  std::string source;
  std::string record_id;

  std::size_t leads() const { return signal.dim(0); }
  std::size_t samples() const { return signal.dim(1); }
  // Lead count in {2, 8, 12}, positive rate, finite samples, 0/1 labels.
  void validate() const;
};

struct LimbLeads {
  std::vector<double> iii, avr, avl, avf;
};

// Einthoven and Goldberger identities:
// III = II - I, aVR = -(I + II)/2, aVL = I - II/2, aVF = II - I/2.
LimbLeads derive_limb_leads(std::span<const double> lead_i, std::span<const double> lead_ii);

// Expands a 2-lead (I, II) or 8-lead (I, II, V1..V6) record to 12 leads.
// Limb leads are derived; absent precordial leads are zero-filled.
EcgRecord to_twelve_lead(const EcgRecord& r);

// Linear interpolation onto a uniform grid at `to_hz`, first sample aligned.
// n_out = floor((n - 1) * to_hz / from_hz) + 1.
Tensor resample_linear(const Tensor& signal, int from_hz, int to_hz);

// to_twelve_lead -> resample -> random crop (longer) or right zero-pad
// (shorter) to exactly target_seconds * target_hz samples.
EcgRecord standardize(const EcgRecord& r, Rng& rng, int target_seconds = kTargetSeconds,
                      int target_hz = kTargetHz);

// Random contiguous window of `seconds` at the record's own rate.
EcgRecord crop_for_analysis(const EcgRecord& r, double seconds, Rng& rng);

inline const std::array<std::string_view, 6> kCategories = {
    "Arrhythmia",        "Conduction disorder", "Axis deviation",
    "Prolonged interval", "Wave abnormality",    "Others"};

// The 26-label Physionet 2021 taxonomy: label -> category.
const std::map<std::string, std::string>& physionet_taxonomy();

enum class Split { unassigned, train, validation, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view text);

struct RecordEntry {
  std::string id;
  std::string path;  // relative to the manifest directory
  std::string source;
  std::vector<std::string> labels;
  Split split = Split::unassigned;
};

struct DatasetManifest {
  std::vector<std::string> labels;
  std::map<std::string, std::string> categories;  // label -> category
  std::vector<RecordEntry> records;

  // Unique ids, known labels, every label categorized.
  void validate() const;
  std::size_t label_index(std::string_view label) const;
  std::vector<std::uint8_t> multi_hot(const RecordEntry& e) const;
  std::vector<std::size_t> indices(Split s) const;
  std::string category_of(std::string_view label) const;
};

struct SplitRatios {
  double train = 0.7;
  double validation = 0.15;
  double test = 0.15;
};

// Largest-remainder apportionment of n records; each count differs from its
// exact share by less than one record. Ties go to the earlier split.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

// Seeded shuffle, then contiguous train/validation/test partition.
DatasetManifest split_dataset(DatasetManifest manifest, const SplitRatios& ratios,
                              std::uint64_t seed);

// A manifest together with its loaded records, index-aligned.
struct Dataset {
  DatasetManifest manifest;
  std::vector<EcgRecord> records;
};

// Binary record: "ECGR", u16 version, u16 leads, u32 samples, u32 rate, then
// leads * samples little-endian float32 values, lead-major. Labels, source
// and id live in the manifest.
void write_record(const EcgRecord& r, const std::string& path);
EcgRecord read_record(const std::string& path);

void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Writes `<dir>/manifest.json` and one record file per entry under
// `<dir>/records/`; entry paths are rewritten accordingly.
void save_dataset(Dataset& ds, const std::string& dir);
// Loads the manifest and every record it references. A missing record file
// is a ValidationError.
Dataset load_dataset(const std::string& manifest_path);

// Standardizes every record (crop stream "crop" under `seed`) and writes the
// result as a new dataset under `out_dir`.
Dataset preprocess_dataset(const Dataset& in, const std::string& out_dir, std::uint64_t seed);

// Morphology rules of the synthetic generator, in label order. Each maps to
// one taxonomy label:
//   STach  heart rate above 100 bpm
//   NSIVCB QRS complex widened
//   LAD    frontal QRS axis rotated to [-75, -35] degrees
//   LPR    PR interval prolonged to about 280 ms
//   TInv   T wave inverted
//   PR     pacing spike ahead of each QRS
inline constexpr std::array<std::string_view, 6> kSyntheticLabels = {"STach", "NSIVCB", "LAD",
                                                                     "LPR",   "TInv",   "PR"};

struct SyntheticEcgParams {
  // Heart rate is a two-component uniform mixture.
  double normal_hr_min = 55.0;
  double normal_hr_max = 90.0;
  double tachy_hr_min = 110.0;
  double tachy_hr_max = 150.0;
  double tachy_fraction = 0.3;
  // Independent probability of each non-rate morphology label.
  double morphology_probability = 0.3;
  double noise_std = 0.02;  // mV, white noise on leads I, II and V1..V6
  int sampling_rate_hz = kTargetHz;
  double seconds = kTargetSeconds;
  std::vector<std::string> sources = {"synth-a", "synth-b", "synth-c"};
  std::uint64_t seed = 0;

  void validate() const;
};

// Probability that a drawn heart rate exceeds 100 bpm.
double tachycardia_prevalence(const SyntheticEcgParams& p);

// n_labels in 1..6 selects the first rules of kSyntheticLabels. Record i is
// drawn from stream ("synth", i), so records are independent of n_records.
Dataset generate_synthetic_dataset(const SyntheticEcgParams& p, std::size_t n_records,
                                   int n_labels);

// Batches records into [batch, 12, length] inputs and [batch, labels] targets.
struct Batch {
  Tensor inputs;
  Tensor targets;
};
Batch make_batch(const std::vector<EcgRecord>& records, std::span<const std::size_t> indices);

}  // namespace scalenet::data
