#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "scalenet/error.hpp"
#include "scalenet/gradient_check.hpp"
#include "scalenet/network_spec.hpp"
#include "scalenet/probe.hpp"
#include "scalenet/resnet1d.hpp"

using namespace scalenet;
using namespace scalenet::net;

namespace {

constexpr int kDepths[] = {2, 4, 8, 16};
constexpr int kChannels[] = {16, 32, 64, 128};
constexpr int kKernels[] = {3, 5, 9, 15};

// Row-by-row weight products of the architecture table, written without the
// builder: stem, then per block the first (widening) layer and the D-1 plain
// layers, then the classifier.
std::int64_t table_oracle(std::int64_t d, std::int64_t c, std::int64_t k, std::int64_t labels) {
  std::int64_t total = k * 12 * c;
  const std::int64_t widths[] = {c, 2 * c, 4 * c, 8 * c};
  std::int64_t prev = c;
  for (std::int64_t w : widths) {
    total += (k * prev * w + k * w * w) + (d - 1) * (k * w * w + k * w * w);
    prev = w;
  }
  return total + 8 * c * labels;
}

Tensor random_input(std::size_t batch, std::size_t length, Rng& rng) {
  Tensor x({batch, 12, length});
  for (auto& v : x.data()) v = rng.normal();
  return x;
}

}  // namespace

TEST(ScaleConfig, ParseAndFormat) {
  const auto s = ScaleConfig::parse("D4-C128-K3");
  EXPECT_EQ(s.depth, 4);
  EXPECT_EQ(s.channels, 128);
  EXPECT_EQ(s.kernel, 3);
  EXPECT_EQ(s.to_string(), "D4-C128-K3");
  EXPECT_THROW(ScaleConfig::parse("D4-C128"), ParseError);
  EXPECT_THROW(ScaleConfig::parse("D0-C16-K3"), ConfigError);
  EXPECT_THROW(ScaleConfig::parse("D2-C16-K4"), ConfigError);
}

TEST(NetworkSpec, WeightedLayerCount) {
  const int expected[] = {18, 34, 66, 130};
  for (int i = 0; i < 4; ++i) {
    const auto spec = NetworkSpec::build({kDepths[i], 16, 3}, 26);
    EXPECT_EQ(spec.weighted_layer_count(), expected[i]);
    EXPECT_EQ(spec.weighted_layer_count(), 8 * kDepths[i] + 2);
  }
}

TEST(NetworkSpec, StructureAndShortcuts) {
  const auto spec = NetworkSpec::build({3, 8, 5}, 4);
  EXPECT_EQ(spec.stem.conv.kernel, 5);
  EXPECT_EQ(spec.stem.conv.stride, 2);
  EXPECT_EQ(spec.stem.conv.padding, 2);
  EXPECT_EQ(spec.stem.pool.kernel, 3);
  EXPECT_EQ(spec.stem.pool.stride, 2);
  EXPECT_EQ(spec.stem.pool.padding, 1);
  EXPECT_EQ(spec.head.in_features, 64);
  for (int n = 0; n < kNumBlocks; ++n) {
    const auto& block = spec.blocks[n];
    ASSERT_EQ(block.size(), 3u);
    EXPECT_EQ(spec.block_channels(n + 1), 8 << n);
    EXPECT_EQ(block[0].stride, 2);
    EXPECT_EQ(block[0].shortcut, n == 0 ? ShortcutKind::pool_only : ShortcutKind::pool_conv);
    EXPECT_EQ(block[0].in_channels, n == 0 ? 8 : 8 << (n - 1));
    for (std::size_t d = 1; d < block.size(); ++d) {
      EXPECT_EQ(block[d].stride, 1);
      EXPECT_EQ(block[d].shortcut, ShortcutKind::identity);
      EXPECT_EQ(block[d].in_channels, block[d].out_channels);
    }
  }
}

TEST(CountParameters, HandWorkedRows) {
  const auto spec = NetworkSpec::build({2, 16, 3}, 26);
  EXPECT_EQ(spec.stem.conv.kernel * spec.stem.in_channels * spec.stem.out_channels, 576);
  std::int64_t r2 = 0;
  for (const auto& l : spec.blocks[1])
    r2 += 3LL * l.in_channels * l.out_channels + 3LL * l.out_channels * l.out_channels;
  EXPECT_EQ(r2, 10752);
  const auto fc_only = count_parameters(NetworkSpec::build({2, 64, 3}, 26), CountMode::main_path) -
                       count_parameters(NetworkSpec::build({2, 64, 3}, 1), CountMode::main_path);
  EXPECT_EQ(fc_only, 8 * 64 * 25);
  EXPECT_EQ(8 * 64 * 26, 13312);
}

TEST(CountParameters, GridMatchesTableFormula) {
  for (int d : kDepths)
    for (int c : kChannels)
      for (int k : kKernels) {
        const auto spec = NetworkSpec::build({d, c, k}, 26);
        EXPECT_EQ(count_parameters(spec, CountMode::main_path), table_oracle(d, c, k, 26))
            << spec.scale.to_string();
      }
}

TEST(CountParameters, FrozenValues) {
  EXPECT_EQ(count_parameters(NetworkSpec::build({2, 16, 3}, 26), CountMode::main_path), 232768);
  EXPECT_EQ(count_parameters(NetworkSpec::build({4, 128, 3}, 26), CountMode::main_path), 31390208);
  EXPECT_EQ(count_parameters(NetworkSpec::build({8, 64, 9}, 26), CountMode::main_path), 48606976);
  EXPECT_EQ(count_parameters(NetworkSpec::build({16, 128, 15}, 26), CountMode::main_path), 658194944);
}

TEST(CountParameters, TotalMatchesInstantiatedModel) {
  for (ScaleConfig s : {ScaleConfig{1, 2, 3}, ScaleConfig{2, 4, 5}, ScaleConfig{3, 3, 3}}) {
    const auto spec = NetworkSpec::build(s, 7);
    ResNet1d model(spec, 1);
    std::int64_t n = 0;
    for (const auto& p : model.parameters()) n += static_cast<std::int64_t>(p.value->size());
    EXPECT_EQ(count_parameters(spec, CountMode::total), n);
    EXPECT_GT(count_parameters(spec, CountMode::total), count_parameters(spec, CountMode::main_path));
  }
}

TEST(OutputShapes, ExactLengths) {
  const auto spec = NetworkSpec::build({2, 16, 3}, 26);
  const auto a = output_shapes(spec, 2500);
  ASSERT_EQ(a.size(), 5u);
  const std::int64_t lengths[] = {625, 313, 157, 79, 40};
  const int channels[] = {16, 16, 32, 64, 128};
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(a[i].length, lengths[i]) << a[i].stage;
    EXPECT_EQ(a[i].channels, channels[i]) << a[i].stage;
  }
  EXPECT_EQ(a[0].stage, "stem");
  EXPECT_EQ(a[4].stage, "R4");

  const auto b = output_shapes(spec, 2560);
  EXPECT_EQ(b[0].length, 640);
  EXPECT_EQ(b[4].length, 40);
  EXPECT_EQ(b[4].channels, 128);
}

TEST(OutputShapes, MatchForwardPass) {
  Rng rng(5);
  for (std::size_t length : {64u, 100u, 257u}) {
    const auto spec = NetworkSpec::build({1, 2, 5}, 3);
    ResNet1d model(spec, 2);
    const auto feats = model.features(random_input(1, length, rng));
    const auto shapes = output_shapes(spec, static_cast<std::int64_t>(length));
    EXPECT_EQ(static_cast<std::int64_t>(feats.dim(2)), shapes.back().length);
    EXPECT_EQ(static_cast<int>(feats.dim(1)), shapes.back().channels);
  }
}

TEST(OutputShapes, TooShortNamesStage) {
  const auto spec = NetworkSpec::build({2, 16, 3}, 26);
  try {
    output_shapes(spec, 3);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("stem"), std::string::npos) << e.what();
  }
  try {
    output_shapes(spec, 10);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("R"), std::string::npos) << e.what();
  }
}

TEST(ReceptiveField, HandWorked) {
  const Window single[] = {{3, 1, 1}};
  EXPECT_EQ(receptive_field(single), 3);
  const Window stem[] = {{3, 2, 1}, {3, 2, 1}};
  EXPECT_EQ(receptive_field(stem), 7);
  EXPECT_EQ(total_stride(NetworkSpec::build({2, 16, 3}, 26)), 64);
}

TEST(ReceptiveField, FrozenGrid) {
  const std::int64_t expected[4][4] = {{847, 1689, 3373, 5899},
                                       {1807, 3609, 7213, 12619},
                                       {3727, 7449, 14893, 26059},
                                       {7567, 15129, 30253, 52939}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_EQ(receptive_field(NetworkSpec::build({kDepths[i], 16, kKernels[j]}, 26)),
                expected[i][j]);
}

TEST(ReceptiveField, StrictlyMonotone) {
  for (int d : kDepths)
    for (int j = 1; j < 4; ++j)
      EXPECT_LT(receptive_field(NetworkSpec::build({d, 16, kKernels[j - 1]}, 2)),
                receptive_field(NetworkSpec::build({d, 16, kKernels[j]}, 2)));
  for (int k : kKernels)
    for (int i = 1; i < 4; ++i)
      EXPECT_LT(receptive_field(NetworkSpec::build({kDepths[i - 1], 16, k}, 2)),
                receptive_field(NetworkSpec::build({kDepths[i], 16, k}, 2)));
}

TEST(ReceptiveField, ProbeMatchesClosedForm) {
  const ScaleConfig configs[] = {{1, 1, 3}, {1, 2, 5}, {2, 1, 3}, {2, 2, 3}, {1, 1, 9},
                                 {2, 1, 5}, {3, 1, 3}, {1, 1, 15}, {2, 1, 7}};
  for (const auto& s : configs) {
    const auto spec = NetworkSpec::build(s, 2);
    ResNet1d model(spec, 3);
    EXPECT_EQ(probe_receptive_field_auto(model), receptive_field(spec)) << s.to_string();
  }
}

TEST(ReceptiveField, ProbeGrowsWithKernel) {
  ResNet1d k3(NetworkSpec::build({1, 1, 3}, 2), 0);
  ResNet1d k7(NetworkSpec::build({1, 1, 7}, 2), 0);
  EXPECT_LT(probe_receptive_field_auto(k3), probe_receptive_field_auto(k7));
}

TEST(ReceptiveField, ImpulseOutsideSignalChangesNothing) {
  ResNet1d model(NetworkSpec::build({1, 1, 3}, 2), 0);
  auto probe = make_probe_model(model);
  EXPECT_TRUE(impulse_response(probe, 256, -1).empty());
  EXPECT_TRUE(impulse_response(probe, 256, 256).empty());
  EXPECT_FALSE(impulse_response(probe, 256, 128).empty());
}

TEST(ReceptiveField, ProbeRejectsClippedInput) {
  ResNet1d model(NetworkSpec::build({2, 1, 9}, 2), 0);
  EXPECT_THROW(probe_receptive_field(model, 256), ShapeError);
}

TEST(ResNet1d, SeedDeterminism) {
  const auto spec = NetworkSpec::build({2, 4, 3}, 5);
  ResNet1d a(spec, 42), b(spec, 42), c(spec, 43);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(*pa[i].value, *pb[i].value) << pa[i].name;
    any_diff = any_diff || !(*pa[i].value == *pc[i].value);
  }
  EXPECT_TRUE(any_diff);
}

TEST(ResNet1d, InferenceDeterministicAndBatchIndependent) {
  Rng rng(9);
  ResNet1d model(NetworkSpec::build({2, 4, 3}, 5), 1, 0.3);
  const Tensor row = random_input(1, 96, rng);
  Tensor dup({3, 12, 96});
  for (std::size_t b = 0; b < 3; ++b)
    std::copy(row.data().begin(), row.data().end(), dup.row(b).begin());
  const Tensor y1 = model.forward(dup, ops::Mode::inference);
  const Tensor y2 = model.forward(dup, ops::Mode::inference);
  EXPECT_EQ(y1, y2);
  for (std::size_t b = 1; b < 3; ++b)
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_NEAR(y1.at(b, j), y1.at(0, j), 1e-12 * (1.0 + std::abs(y1.at(0, j))));
}

TEST(ResNet1d, RejectsWrongLeadCount) {
  ResNet1d model(NetworkSpec::build({1, 2, 3}, 2), 1);
  EXPECT_THROW(model.forward(Tensor({1, 8, 64}), ops::Mode::inference), ShapeError);
}

TEST(ResNet1d, FullModelGradientCheck) {
  Rng rng(77);
  ResNet1d model(NetworkSpec::build({2, 4, 3}, 3), 5);
  // Non-trivial BN affine parameters exercise every gradient path.
  for (auto& p : model.parameters())
    if (p.kind == "batchnorm")
      for (auto& v : p.value->data()) v += rng.uniform(-0.2, 0.2);
  Tensor x = random_input(4, 64, rng);
  Tensor targets({4, 3});
  for (auto& v : targets.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;

  auto loss = [&] {
    return ops::bce_with_logits_loss(model.forward(x, ops::Mode::training), targets);
  };
  const Tensor logits = model.forward(x, ops::Mode::training);
  model.backward(ops::bce_with_logits_backward(logits, targets));

  std::vector<GradientProbe> probes;
  for (const auto& p : model.parameters()) probes.push_back({p.kind, p.name, p.value, p.grad});
  const Tensor input_grad = model.input_grad();
  probes.push_back({"input", "x", &x, &input_grad});

  GradientCheckOptions opts;
  opts.tolerance = 1e-4;
  opts.max_elements_per_tensor = 12;
  opts.seed = 1;
  const auto report = gradient_check(loss, probes, opts);
  for (const auto& [kind, err] : report.max_rel_error_by_layer_type)
    EXPECT_LT(err, 1e-4) << kind;
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_TRUE(report.max_rel_error_by_layer_type.count("conv"));
  EXPECT_TRUE(report.max_rel_error_by_layer_type.count("batchnorm"));
  EXPECT_TRUE(report.max_rel_error_by_layer_type.count("linear"));
}

TEST(ResNet1d, DropoutOnlyInTraining) {
  Rng rng(3);
  ResNet1d model(NetworkSpec::build({1, 2, 3}, 2), 1, 0.5);
  const Tensor x = random_input(2, 64, rng);
  EXPECT_THROW(model.forward(x, ops::Mode::training), ConfigError);
  Rng drop(1);
  EXPECT_NO_THROW(model.forward(x, ops::Mode::training, &drop));
}

TEST(Checkpoint, RoundTrip) {
  Rng rng(4);
  ResNet1d model(NetworkSpec::build({2, 3, 5}, 4), 12, 0.2);
  Rng drop(2);
  model.forward(random_input(3, 80, rng), ops::Mode::training, &drop);  // move running stats
  const auto path = (std::filesystem::temp_directory_path() / "scalenet_ckpt_test.bin").string();
  save_checkpoint(model, path);
  ResNet1d loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.spec().scale, model.spec().scale);
  EXPECT_EQ(loaded.seed(), 12u);
  EXPECT_DOUBLE_EQ(loaded.dropout_rate(), 0.2);
  const auto a = std::as_const(model).state();
  const auto b = std::as_const(loaded).state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(*a[i].second, *b[i].second) << a[i].first;
  }
  const Tensor x = random_input(2, 64, rng);
  EXPECT_EQ(model.forward(x, ops::Mode::inference), loaded.forward(x, ops::Mode::inference));

  // Truncation is detected.
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 9);
  EXPECT_THROW(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}

TEST(NetworkSpecJson, RoundTrip) {
  const auto spec = NetworkSpec::build({4, 32, 9}, 26);
  const auto back = network_spec_from_json(to_json(spec));
  EXPECT_EQ(back.scale, spec.scale);
  EXPECT_EQ(back.num_labels(), 26);
  EXPECT_EQ(count_parameters(back, CountMode::total), count_parameters(spec, CountMode::total));
}
