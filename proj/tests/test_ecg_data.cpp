#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "scalenet/ecg_data.hpp"
#include "scalenet/error.hpp"

using namespace scalenet;
using namespace scalenet::data;
namespace fs = std::filesystem;

namespace {

EcgRecord make_record(std::size_t leads, std::size_t samples, int rate, double fill = 0.0) {
  EcgRecord r;
  r.signal = Tensor({leads, samples}, fill);
  r.sampling_rate_hz = rate;
  r.record_id = "r";
  return r;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("scalenet_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void expect_limb_identities(const EcgRecord& r) {
  for (std::size_t s = 0; s < r.samples(); ++s) {
    const double i = r.signal.at(0, s), ii = r.signal.at(1, s);
    EXPECT_NEAR(r.signal.at(2, s), ii - i, 1e-12);
    EXPECT_NEAR(r.signal.at(3, s) + r.signal.at(4, s) + r.signal.at(5, s), 0.0, 1e-12);
  }
}

}  // namespace

TEST(LimbLeads, HandEvaluated) {
  const std::vector<double> i(4, 1.0), ii(4, 2.0);
  const auto l = derive_limb_leads(i, ii);
  EXPECT_DOUBLE_EQ(l.iii[0], 1.0);
  EXPECT_DOUBLE_EQ(l.avr[0], -1.5);
  EXPECT_DOUBLE_EQ(l.avl[0], 0.0);
  EXPECT_DOUBLE_EQ(l.avf[0], 1.5);

  const std::vector<double> z(3, 0.0);
  const auto zero = derive_limb_leads(z, z);
  for (const auto* v : {&zero.iii, &zero.avr, &zero.avl, &zero.avf})
    for (double x : *v) EXPECT_EQ(x, 0.0);

  EXPECT_THROW(derive_limb_leads(std::vector<double>(3), std::vector<double>(4)), ShapeError);
}

TEST(LimbLeads, GoldbergerSumVanishes) {
  Rng rng(1);
  std::vector<double> i(1000), ii(1000);
  for (auto& v : i) v = rng.normal(0, 3);
  for (auto& v : ii) v = rng.normal(0, 3);
  const auto l = derive_limb_leads(i, ii);
  for (std::size_t s = 0; s < i.size(); ++s) {
    EXPECT_NEAR(l.avr[s] + l.avl[s] + l.avf[s], 0.0, 1e-12);
    EXPECT_NEAR(l.iii[s], ii[s] - i[s], 1e-12);
  }
}

TEST(TwelveLead, ExpandsReducedSets) {
  Rng rng(2);
  for (std::size_t leads : {2u, 8u}) {
    EcgRecord r = make_record(leads, 50, 250);
    for (auto& v : r.signal.data()) v = rng.normal();
    const auto full = to_twelve_lead(r);
    ASSERT_EQ(full.leads(), 12u);
    expect_limb_identities(full);
    for (std::size_t s = 0; s < 50; ++s) {
      for (std::size_t v = 0; v < 6; ++v) {
        EXPECT_EQ(full.signal.at(6 + v, s), leads == 8 ? r.signal.at(2 + v, s) : 0.0);
      }
    }
  }
  EXPECT_THROW(to_twelve_lead(make_record(3, 10, 250)), ShapeError);
}

TEST(Standardize, DecimatesToTargetRate) {
  Rng rng(3);
  const auto out = standardize(make_record(12, 5000, 500, 1.0), rng);
  EXPECT_EQ(out.samples(), 2500u);
  EXPECT_EQ(out.leads(), 12u);
  EXPECT_EQ(out.sampling_rate_hz, 250);
}

TEST(Standardize, PadsShortRecordsWithZeros) {
  Rng rng(3);
  EcgRecord r = make_record(12, 2000, 250, 0.7);
  const auto out = standardize(r, rng);
  ASSERT_EQ(out.samples(), 2500u);
  for (std::size_t lead = 0; lead < 12; ++lead) {
    EXPECT_EQ(out.signal.at(lead, 1999), 0.7);
    for (std::size_t s = 2000; s < 2500; ++s) EXPECT_EQ(out.signal.at(lead, s), 0.0);
  }
}

TEST(Standardize, PreservesDc) {
  for (int from : {100, 360, 500, 1000}) {
    const Tensor out = resample_linear(Tensor({2, 777}, 0.4321), from, 250);
    for (double v : out.data()) EXPECT_NEAR(v, 0.4321, 1e-9);
  }
}

TEST(Standardize, PreservesEnergyOfBandLimitedSignal) {
  for (int from : {500, 360, 1000}) {
    const std::size_t n = static_cast<std::size_t>(from) * 12;
    Tensor x({1, n});
    for (std::size_t s = 0; s < n; ++s) {
      const double t = static_cast<double>(s) / from;
      x.at(0, s) = std::sin(2 * std::numbers::pi * 3.0 * t) + 0.5 * std::sin(2 * std::numbers::pi * 7.0 * t + 1.0);
    }
    const Tensor y = resample_linear(x, from, 250);
    double ex = 0, ey = 0;
    for (double v : x.data()) ex += v * v;
    for (double v : y.data()) ey += v * v;
    ex /= static_cast<double>(x.size());
    ey /= static_cast<double>(y.size());
    EXPECT_NEAR(ey / ex, 1.0, 0.02) << from;
  }
}

TEST(Standardize, CropIsSeededAndInBounds) {
  EcgRecord r = make_record(12, 6000, 250);
  for (std::size_t s = 0; s < 6000; ++s) r.signal.at(0, s) = static_cast<double>(s);
  Rng a(5), b(5);
  const auto x = standardize(r, a), y = standardize(r, b);
  EXPECT_EQ(x.signal, y.signal);
  const double start = x.signal.at(0, 0);
  for (std::size_t s = 0; s < 2500; ++s) EXPECT_EQ(x.signal.at(0, s), start + static_cast<double>(s));
}

TEST(Standardize, RejectsEmptyAndNaN) {
  Rng rng(1);
  EcgRecord r = make_record(12, 10, 250);
  r.signal.at(3, 4) = std::nan("");
  EXPECT_THROW(standardize(r, rng), ValidationError);
  EcgRecord empty;
  EXPECT_THROW(standardize(empty, rng), ValidationError);
}

TEST(CropForAnalysis, DurationsAndBounds) {
  EcgRecord r = make_record(12, 2500, 250);
  for (std::size_t s = 0; s < 2500; ++s) r.signal.at(1, s) = static_cast<double>(s);
  Rng rng(8);
  EXPECT_EQ(crop_for_analysis(r, 2, rng).samples(), 500u);
  EXPECT_EQ(crop_for_analysis(r, 1, rng).samples(), 250u);
  EXPECT_EQ(crop_for_analysis(r, 10, rng).signal, r.signal);
  for (int k = 0; k < 10000; ++k) {
    const auto c = crop_for_analysis(r, 2, rng);
    const double start = c.signal.at(1, 0);
    ASSERT_GE(start, 0.0);
    ASSERT_LE(start + 499.0, 2499.0);
    ASSERT_EQ(c.signal.at(1, 499), start + 499.0);
  }
  EXPECT_THROW(crop_for_analysis(r, 11, rng), ValidationError);
}

TEST(Split, CountsFollowLargestRemainder) {
  EXPECT_EQ(split_counts(100, {}), (std::array<std::size_t, 3>{70, 15, 15}));
  EXPECT_EQ(split_counts(7, {}), (std::array<std::size_t, 3>{5, 1, 1}));
  for (std::size_t n = 1; n < 400; ++n) {
    const auto c = split_counts(n, {});
    EXPECT_EQ(c[0] + c[1] + c[2], n);
    EXPECT_LT(std::abs(static_cast<double>(c[0]) - 0.7 * n), 1.0) << n;
    EXPECT_LT(std::abs(static_cast<double>(c[1]) - 0.15 * n), 1.0) << n;
    EXPECT_LT(std::abs(static_cast<double>(c[2]) - 0.15 * n), 1.0) << n;
  }
  EXPECT_THROW(split_counts(10, {0.5, 0.5, 0.5}), ConfigError);
}

TEST(Split, PartitionAndDeterminism) {
  DatasetManifest m;
  for (int i = 0; i < 37; ++i) m.records.push_back({"id" + std::to_string(i), "", "s", {}, Split::unassigned});
  const auto a = split_dataset(m, {}, 9), b = split_dataset(m, {}, 9), c = split_dataset(m, {}, 10);
  std::size_t total = 0;
  bool differs = false;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    total += a.indices(s).size();
    EXPECT_EQ(a.indices(s), b.indices(s));
    differs = differs || a.indices(s) != c.indices(s);
  }
  EXPECT_EQ(total, 37u);
  EXPECT_TRUE(a.indices(Split::unassigned).empty());
  EXPECT_TRUE(differs);
  EXPECT_THROW(split_dataset(DatasetManifest{}, {}, 1), ValidationError);
}

TEST(Taxonomy, SixCategoriesTwentySixLabels) {
  const auto& t = physionet_taxonomy();
  EXPECT_EQ(t.size(), 26u);
  std::set<std::string> cats;
  for (const auto& [label, cat] : t) cats.insert(cat);
  EXPECT_EQ(cats.size(), 6u);
  EXPECT_EQ(t.at("LAD"), "Axis deviation");
  EXPECT_EQ(t.at("NSR"), "Others");
}

TEST(RecordIo, RoundTripAndTruncation) {
  const auto dir = scratch_dir("record_io");
  Rng rng(4);
  EcgRecord r = make_record(12, 300, 500);
  for (auto& v : r.signal.data()) v = static_cast<float>(rng.normal());
  const auto path = (dir / "a.ecgr").string();
  write_record(r, path);
  const auto back = read_record(path);
  EXPECT_EQ(back.signal, r.signal);
  EXPECT_EQ(back.sampling_rate_hz, 500);

  fs::resize_file(path, fs::file_size(path) - 3);
  EXPECT_THROW(read_record(path), ParseError);
  fs::resize_file(path, 10);
  EXPECT_THROW(read_record(path), ParseError);
  EXPECT_THROW(read_record((dir / "missing.ecgr").string()), ValidationError);
  fs::remove_all(dir);
}

TEST(DatasetIo, RoundTripAndMissingRecord) {
  const auto dir = scratch_dir("dataset_io");
  SyntheticEcgParams p;
  p.seed = 3;
  Dataset ds = generate_synthetic_dataset(p, 12, 6);
  ds.manifest = split_dataset(ds.manifest, {}, 1);
  save_dataset(ds, dir.string());
  const Dataset back = load_dataset((dir / "manifest.json").string());
  ASSERT_EQ(back.records.size(), 12u);
  EXPECT_EQ(back.manifest.labels, ds.manifest.labels);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(back.records[i].labels, ds.records[i].labels);
    EXPECT_EQ(back.records[i].source, ds.records[i].source);
    EXPECT_EQ(back.manifest.records[i].split, ds.manifest.records[i].split);
    for (std::size_t k = 0; k < back.records[i].signal.size(); ++k)
      ASSERT_EQ(back.records[i].signal[k], static_cast<float>(ds.records[i].signal[k]));
  }
  fs::remove(dir / back.manifest.records[5].path);
  EXPECT_THROW(load_dataset((dir / "manifest.json").string()), ValidationError);
  fs::remove_all(dir);
}

TEST(Manifest, RejectsUnknownLabels) {
  DatasetManifest m;
  m.labels = {"AF"};
  m.categories = {{"AF", "Arrhythmia"}};
  m.records.push_back({"a", "a.ecgr", "s", {"LAD"}, Split::train});
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Synthetic, DeterministicUnderSeed) {
  SyntheticEcgParams p;
  p.seed = 11;
  const auto a = generate_synthetic_dataset(p, 5, 6);
  const auto b = generate_synthetic_dataset(p, 5, 6);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.records[i].signal, b.records[i].signal);
    EXPECT_EQ(a.records[i].labels, b.records[i].labels);
  }
  p.seed = 12;
  EXPECT_FALSE(generate_synthetic_dataset(p, 1, 6).records[0].signal == a.records[0].signal);
}

TEST(Synthetic, LeadsSatisfyLimbIdentities) {
  SyntheticEcgParams p;
  const auto ds = generate_synthetic_dataset(p, 6, 6);
  for (const auto& r : ds.records) {
    ASSERT_EQ(r.leads(), 12u);
    ASSERT_EQ(r.samples(), 2500u);
    expect_limb_identities(r);
  }
}

TEST(Synthetic, TachycardiaPrevalenceMatchesRateDistribution) {
  SyntheticEcgParams p;
  p.normal_hr_min = 60;
  p.normal_hr_max = 120;  // a third of this component is above 100
  p.tachy_fraction = 0.25;
  p.seconds = 1;
  const double expected = tachycardia_prevalence(p);
  EXPECT_NEAR(expected, 0.75 / 3.0 + 0.25, 1e-12);
  const std::size_t n = 4000;
  const auto ds = generate_synthetic_dataset(p, n, 1);
  std::size_t positive = 0;
  for (const auto& r : ds.records) positive += r.labels[0];
  const double se = std::sqrt(expected * (1 - expected) / n);
  EXPECT_NEAR(static_cast<double>(positive) / n, expected, 4 * se);
}

TEST(Synthetic, LabelsMapIntoTaxonomy) {
  const auto ds = generate_synthetic_dataset(SyntheticEcgParams{}, 3, 6);
  EXPECT_NO_THROW(ds.manifest.validate());
  EXPECT_EQ(ds.manifest.category_of("STach"), "Arrhythmia");
  EXPECT_EQ(ds.manifest.category_of("PR"), "Others");
  EXPECT_THROW(generate_synthetic_dataset(SyntheticEcgParams{}, 3, 7), ConfigError);
}

TEST(Batch, StacksRecords) {
  const auto ds = generate_synthetic_dataset(SyntheticEcgParams{}, 4, 3);
  const std::size_t idx[] = {2, 0};
  const auto b = make_batch(ds.records, idx);
  EXPECT_EQ(b.inputs.shape(), (Shape{2, 12, 2500}));
  EXPECT_EQ(b.targets.shape(), (Shape{2, 3}));
  EXPECT_EQ(b.inputs.at(0, 4, 17), ds.records[2].signal.at(4, 17));
  EXPECT_EQ(b.targets.at(1, 0), ds.records[0].labels[0]);
}
