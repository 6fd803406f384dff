#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "scalenet/augment.hpp"
#include "scalenet/error.hpp"

using namespace scalenet;
using namespace scalenet::augment;

namespace {

Tensor ecg_like(std::uint64_t seed, std::size_t length = 2500) {
  Rng rng(seed);
  Tensor x({12, length});
  for (std::size_t l = 0; l < 12; ++l)
    for (std::size_t j = 0; j < length; ++j)
      x.at(l, j) = std::sin(0.05 * static_cast<double>(j) * (1.0 + 0.1 * l)) + 0.1 * rng.normal();
  return x;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST(Registry, EighteenUniquelyNamedTransforms) {
  const auto& reg = default_registry();
  EXPECT_EQ(reg.size(), 18u);
  std::set<std::string> names;
  for (const auto& t : reg) {
    names.insert(t.name);
    EXPECT_FALSE(t.magnitude.empty()) << t.name;
    EXPECT_FALSE(t.units.empty()) << t.name;
  }
  EXPECT_EQ(names.size(), 18u);
  EXPECT_EQ(find_transform("sign_flip").name, "sign_flip");
  EXPECT_THROW(find_transform("nope"), ConfigError);
}

TEST(Registry, MagnitudeZeroIsIdentity) {
  const Tensor x = ecg_like(1);
  for (const auto& t : default_registry()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const Tensor y = t.apply(x, 0.0, 250, rng);
      ASSERT_EQ(y.shape(), x.shape()) << t.name;
      EXPECT_LE(max_abs_diff(x, y), 1e-12) << t.name;
    }
  }
}

TEST(Registry, ShapePreservedAndFiniteAtEveryMagnitude) {
  for (std::size_t length : {2500u, 500u, 64u}) {
    const Tensor x = ecg_like(2, length);
    for (const auto& t : default_registry()) {
      for (int m = 0; m <= kMaxMagnitude; ++m) {
        Rng rng(static_cast<std::uint64_t>(m) + 100);
        const Tensor y = t.apply(x, m / 10.0, 250, rng);
        ASSERT_EQ(y.shape(), x.shape()) << t.name << " m=" << m;
        ASSERT_TRUE(y.all_finite()) << t.name << " m=" << m;
      }
    }
  }
}

TEST(Registry, FullMagnitudeChangesSignal) {
  const Tensor x = ecg_like(3);
  for (const auto& t : default_registry()) {
    bool changed = false;
    for (std::uint64_t seed = 0; seed < 20 && !changed; ++seed) {
      Rng rng(seed);
      changed = max_abs_diff(x, t.apply(x, 1.0, 250, rng)) > 1e-6;
    }
    EXPECT_TRUE(changed) << t.name;
  }
}

TEST(Policy, ZeroOpsAndZeroMagnitudeAreIdentity) {
  const Tensor x = ecg_like(4);
  Rng rng(1);
  EXPECT_EQ(apply_policy(x, {0, 10}, rng), x);
  for (int n = 0; n <= 2; ++n) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r(seed);
      EXPECT_LE(max_abs_diff(apply_policy(x, {n, 0}, r), x), 1e-12);
    }
  }
}

TEST(Policy, DeterministicUnderSeed) {
  const Tensor x = ecg_like(5);
  Rng a(77), b(77);
  EXPECT_EQ(apply_policy(x, {2, 7}, a), apply_policy(x, {2, 7}, b));
}

TEST(Policy, Validation) {
  Rng rng(1);
  const Tensor x = ecg_like(6, 64);
  EXPECT_THROW(apply_policy(x, {3, 1}, rng), ConfigError);
  EXPECT_THROW(apply_policy(x, {1, 11}, rng), ConfigError);
  const std::vector<Transform> empty;
  AugmentPolicy p{1, 5, &empty};
  EXPECT_THROW(apply_policy(x, p, rng), ConfigError);
}

TEST(Mixup, ConvexCombinationWithFixedLambda) {
  const auto m = mix_with_lambda(Tensor({1}, 1.0), Tensor({2}, {1.0, 0.0}), Tensor({1}, 0.0),
                                 Tensor({2}, {0.0, 1.0}), 0.3);
  EXPECT_NEAR(m.x[0], 0.3, 1e-15);
  EXPECT_NEAR(m.y[0], 0.3, 1e-15);
  EXPECT_NEAR(m.y[1], 0.7, 1e-15);
}

TEST(Mixup, BetaZeroDisables) {
  Rng rng(1);
  const Tensor xi = ecg_like(7, 32), xj = ecg_like(8, 32);
  const Tensor yi({3}, {1.0, 0.0, 1.0}), yj({3}, {0.0, 1.0, 0.0});
  const auto m = mixup(xi, yi, xj, yj, {0.0}, rng);
  EXPECT_EQ(m.x, xi);
  EXPECT_EQ(m.y, yi);
  EXPECT_EQ(m.lambda, 1.0);
}

TEST(Mixup, OutputsStayWithinBoundsAndPreserveLabelMass) {
  Rng rng(21);
  const Tensor xi = ecg_like(9, 64), xj = ecg_like(10, 64);
  const Tensor yi({4}, {1.0, 0.0, 1.0, 1.0}), yj({4}, {0.0, 1.0, 1.0, 0.0});
  for (double beta : {0.1, 0.2}) {
    for (int trial = 0; trial < 500; ++trial) {
      const auto m = mixup(xi, yi, xj, yj, {beta}, rng);
      ASSERT_GE(m.lambda, 0.0);
      ASSERT_LE(m.lambda, 1.0);
      for (std::size_t k = 0; k < xi.size(); ++k) {
        ASSERT_GE(m.x[k], std::min(xi[k], xj[k]) - 1e-15);
        ASSERT_LE(m.x[k], std::max(xi[k], xj[k]) + 1e-15);
      }
      double sum = 0.0;
      for (double v : m.y.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        sum += v;
      }
      EXPECT_NEAR(sum, m.lambda * 3.0 + (1.0 - m.lambda) * 2.0, 1e-12);
    }
  }
}

TEST(Mixup, BatchFormMixesWithinBatch) {
  Rng rng(2);
  Tensor x({4, 1, 3}), y({4, 2});
  for (std::size_t b = 0; b < 4; ++b) {
    for (auto& v : x.row(b)) v = static_cast<double>(b);
    y.at(b, b % 2) = 1.0;
  }
  Tensor x0 = x;
  EXPECT_EQ(mixup_batch(x, y, {0.0}, rng), 1.0);
  EXPECT_EQ(x, x0);
  const double lambda = mixup_batch(x, y, {0.2}, rng);
  EXPECT_GE(lambda, 0.0);
  EXPECT_LE(lambda, 1.0);
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_NEAR(y.at(b, 0) + y.at(b, 1), 1.0, 1e-12);
    EXPECT_GE(x.at(b, 0, 0), 0.0);
    EXPECT_LE(x.at(b, 0, 0), 3.0);
  }
}
