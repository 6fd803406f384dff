#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "scalenet/error.hpp"
#include "scalenet/train.hpp"

using namespace scalenet;
using namespace scalenet::train;

namespace {

data::Dataset small_dataset(std::size_t n, int labels, double seconds = 1.28, std::uint64_t seed = 1) {
  data::SyntheticEcgParams p;
  p.seconds = seconds;
  p.seed = seed;
  auto ds = data::generate_synthetic_dataset(p, n, labels);
  ds.manifest = data::split_dataset(ds.manifest, {}, seed);
  return ds;
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.learning_rate = 3e-3;
  c.max_epochs = epochs;
  c.peak_epoch = 1;
  c.batch_size = 8;
  return c;
}

std::vector<Tensor> snapshot(net::ResNet1d& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(*p.value);
  return out;
}

}  // namespace

TEST(OneCycle, BoundaryValuesAndPeak) {
  EXPECT_DOUBLE_EQ(one_cycle_lr(10, 0.01, 10, 40), 0.01);
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, 0.01, 10, 40), 0.01 / 25);
  EXPECT_NEAR(one_cycle_lr(40, 0.01, 10, 40), 0.01 / 1e4, 1e-18);
  EXPECT_LT(one_cycle_lr(5, 0.01, 10, 40), one_cycle_lr(10, 0.01, 10, 40));
  EXPECT_LT(one_cycle_lr(30, 0.01, 10, 40), one_cycle_lr(10, 0.01, 10, 40));
  EXPECT_THROW(one_cycle_lr(1, 0.01, 10, 10), ConfigError);
  EXPECT_THROW(one_cycle_lr(41, 0.01, 10, 40), ConfigError);
}

TEST(OneCycle, PiecewiseMonotoneAndPositiveWithMaxAtPeak) {
  double prev = 0.0, best = 0.0, argmax = -1.0;
  for (int i = 0; i <= 4000; ++i) {
    const double e = i / 100.0;
    const double lr = one_cycle_lr(e, 1e-3, 10, 40);
    EXPECT_GT(lr, 0.0);
    if (e <= 10.0) EXPECT_GE(lr, prev);
    else EXPECT_LE(lr, prev);
    if (lr > best) {
      best = lr;
      argmax = e;
    }
    prev = lr;
  }
  EXPECT_EQ(argmax, 10.0);
  EXPECT_EQ(best, 1e-3);
}

TEST(Adam, FirstStepClosedForm) {
  Tensor w({1}, 0.5), g({1}, 1.0);
  std::vector<net::Parameter> params = {{"w", "test", &w, &g}};
  AdamState s;
  adam_step(params, s, 0.1, 0.0);
  EXPECT_NEAR(w[0] - 0.5, -0.1, 1e-6);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientAndDecoupledDecay) {
  Tensor w({3}, {0.5, -2.0, 1.0}), g({3});
  std::vector<net::Parameter> params = {{"w", "test", &w, &g}};
  AdamState s;
  const Tensor before = w;
  adam_step(params, s, 0.1, 0.0);
  EXPECT_EQ(w, before);
  for (int i = 0; i < 5; ++i) {
    const Tensor prev = w;
    adam_step(params, s, 0.1, 1e-2);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(w[k]), std::abs(prev[k]));
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensor w({2}), g({2}, {1.0, std::nan("")});
  std::vector<net::Parameter> params = {{"R2.L1.conv1.weight", "conv", &w, &g}};
  AdamState s;
  try {
    adam_step(params, s, 0.1, 0.0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("R2.L1.conv1.weight"), std::string::npos);
  }
  EXPECT_EQ(w[0], 0.0);
}

TEST(Adam, FrozenPassLeavesModelBitIdentical) {
  net::ResNet1d model(net::NetworkSpec::build({1, 2, 3}, 2), 4);
  Rng rng(1);
  Tensor x({2, 12, 64});
  for (auto& v : x.data()) v = rng.normal();
  const Tensor logits = model.forward(x, ops::Mode::training);
  model.backward(ops::bce_with_logits_backward(logits, Tensor(logits.shape(), 1.0)));
  const auto before = snapshot(model);
  auto params = model.parameters();
  AdamState s;
  adam_step(params, s, 0.0, 0.0);
  const auto after = snapshot(model);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(TrainConfig, BoundsReportedVerbatim) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.05;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("[1e-4, 1e-2]"), std::string::npos) << e.what();
  }
  c = TrainConfig{};
  c.weight_decay = 1e-3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.dropout_rate = 0.07;
  EXPECT_THROW(c.validate(), ConfigError);
  c.dropout_rate = 0.15;
  EXPECT_NO_THROW(c.validate());
  c.mixup_beta = 0.3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.magnitude = 11;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.max_epochs = 10;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.learning_rate = 2.5e-3;
  c.n_ops = 2;
  c.magnitude = 4;
  c.mixup_beta = 0.2;
  c.seed = 99;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Training, ZeroEpochRunReturnsInitialModel) {
  const auto ds = small_dataset(20, 2);
  net::ResNet1d model(net::NetworkSpec::build({1, 2, 3}, 2), 3);
  const auto init = snapshot(model);
  auto res = train_model(model, make_train_data(ds), quick_config(0));
  EXPECT_TRUE(res.log.epochs.empty());
  EXPECT_EQ(res.log.best_epoch, 0);
  const auto best = snapshot(res.best);
  for (std::size_t i = 0; i < init.size(); ++i) EXPECT_EQ(init[i], best[i]);
}

TEST(Training, DeterministicUnderSeeds) {
  const auto ds = small_dataset(24, 3);
  auto cfg = quick_config(3);
  cfg.n_ops = 2;
  cfg.magnitude = 5;
  cfg.mixup_beta = 0.2;
  cfg.dropout_rate = 0.1;
  cfg.seed = 5;
  cfg.augment_seed = 6;
  const auto spec = net::NetworkSpec::build({1, 4, 3}, 3);
  const auto a = train_model(net::ResNet1d(spec, 7), make_train_data(ds), cfg);
  const auto b = train_model(net::ResNet1d(spec, 7), make_train_data(ds), cfg);
  ASSERT_EQ(a.log.epochs.size(), 3u);
  EXPECT_EQ(a.log.to_jsonl(false), b.log.to_jsonl(false));
  cfg.augment_seed = 8;
  const auto c = train_model(net::ResNet1d(spec, 7), make_train_data(ds), cfg);
  EXPECT_NE(a.log.to_jsonl(false), c.log.to_jsonl(false));
}

TEST(Training, PausedTrainerMatchesUninterruptedRun) {
  const auto ds = small_dataset(24, 2);
  const auto spec = net::NetworkSpec::build({1, 2, 3}, 2);
  const auto cfg = quick_config(4);
  Trainer whole(net::ResNet1d(spec, 2), make_train_data(ds), cfg);
  while (!whole.finished()) whole.run_epoch();

  Trainer first(net::ResNet1d(spec, 2), make_train_data(ds), cfg);
  first.run_epoch();
  first.run_epoch();
  Trainer resumed = first;  // paused copy
  while (!resumed.finished()) resumed.run_epoch();
  EXPECT_EQ(resumed.log().to_jsonl(false), whole.log().to_jsonl(false));
}

TEST(Training, ReporterCanStopEarly) {
  const auto ds = small_dataset(20, 2);
  int calls = 0;
  auto res = train_model(net::ResNet1d(net::NetworkSpec::build({1, 2, 3}, 2), 1), make_train_data(ds),
                         quick_config(5), [&](int epoch, double f1) {
                           ++calls;
                           EXPECT_EQ(epoch, calls);
                           EXPECT_GE(f1, 0.0);
                           return epoch == 2 ? Decision::stop : Decision::proceed;
                         });
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(res.log.epochs.size(), 2u);
  EXPECT_TRUE(res.log.stopped_early);
}

TEST(Training, BestCheckpointAndLogWritten) {
  const auto dir = std::filesystem::temp_directory_path() / "scalenet_train";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto ds = small_dataset(20, 2);
  auto res = train_model(net::ResNet1d(net::NetworkSpec::build({1, 2, 3}, 2), 1), make_train_data(ds),
                         quick_config(3), {}, (dir / "best.ckpt").string(), (dir / "log.jsonl").string());
  ASSERT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
  auto loaded = net::load_checkpoint((dir / "best.ckpt").string());
  const auto a = snapshot(loaded), b = snapshot(res.best);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  double best = -1;
  for (const auto& e : res.log.epochs) best = std::max(best, e.val_macro_f1);
  EXPECT_EQ(res.log.best_f1, best);
  std::filesystem::remove_all(dir);
}

TEST(Training, FrozenModelLossIsRepeatable) {
  const auto ds = small_dataset(10, 2);
  net::ResNet1d model(net::NetworkSpec::build({1, 2, 3}, 2), 1);
  const std::vector<std::size_t> all = {0, 1, 2, 3, 4};
  const auto b = data::make_batch(ds.records, all);
  const double l1 = ops::bce_with_logits_loss(model.forward(b.inputs, ops::Mode::inference), b.targets);
  const double l2 = ops::bce_with_logits_loss(model.forward(b.inputs, ops::Mode::inference), b.targets);
  EXPECT_EQ(l1, l2);
}

TEST(Training, SmallStepDecreasesLossOnTwoRecords) {
  int decreased = 0;
  const int seeds = 40;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto ds = small_dataset(2, 3, 1.28, static_cast<std::uint64_t>(seed) + 100);
    net::ResNet1d model(net::NetworkSpec::build({1, 4, 3}, 3), static_cast<std::uint64_t>(seed));
    const std::vector<std::size_t> both = {0, 1};
    const auto b = data::make_batch(ds.records, both);
    const Tensor logits = model.forward(b.inputs, ops::Mode::training);
    const double before = ops::bce_with_logits_loss(logits, b.targets);
    model.backward(ops::bce_with_logits_backward(logits, b.targets));
    auto params = model.parameters();
    AdamState s;
    adam_step(params, s, 1e-3, 0.0);
    const double after = ops::bce_with_logits_loss(model.forward(b.inputs, ops::Mode::training), b.targets);
    decreased += after < before;
  }
  EXPECT_GE(decreased, static_cast<int>(std::ceil(0.95 * seeds)));
}

TEST(Training, RejectsLabelWidthMismatch) {
  const auto ds = small_dataset(10, 2);
  EXPECT_THROW(Trainer(net::ResNet1d(net::NetworkSpec::build({1, 2, 3}, 3), 1), make_train_data(ds),
                       quick_config(2)),
               ShapeError);
}
