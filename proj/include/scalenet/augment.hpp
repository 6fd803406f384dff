#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scalenet/rng.hpp"
#include "scalenet/tensor.hpp"

namespace scalenet::augment {

inline constexpr int kMaxMagnitude = 10;

// One registered transform. `apply` maps a [leads, samples] signal to a
// signal of the same shape; `strength` is magnitude / 10 in [0, 1] and
// strength 0 is the identity.
struct Transform {
  std::string name;
  std::string magnitude;  // what the magnitude controls
  std::string units;
  std::function<Tensor(const Tensor& signal, double strength, int sampling_rate_hz, Rng& rng)> apply;
};

// The 18 ECG transforms, in a fixed order.
const std::vector<Transform>& default_registry();
const Transform& find_transform(const std::string& name);

struct AugmentPolicy {
  int n_ops = 0;      // 0..2
  int magnitude = 0;  // 0..10
  const std::vector<Transform>* registry = &default_registry();

  void validate() const;
};

// RandAugment: n_ops transforms drawn uniformly with replacement, each applied
// at the policy magnitude.
Tensor apply_policy(const Tensor& signal, const AugmentPolicy& policy, Rng& rng,
                    int sampling_rate_hz = 250);

struct MixupConfig {
  double beta = 0.0;  // 0 disables mixing

  void validate() const;
};

struct Mixed {
  Tensor x;
  Tensor y;
  double lambda = 1.0;
};

// x = lambda * x_i + (1 - lambda) * x_j, same for y.
Mixed mix_with_lambda(const Tensor& x_i, const Tensor& y_i, const Tensor& x_j, const Tensor& y_j,
                      double lambda);

// lambda ~ Beta(beta, beta) when beta > 0, else lambda = 1 and (x_i, y_i) is
// returned unchanged.
Mixed mixup(const Tensor& x_i, const Tensor& y_i, const Tensor& x_j, const Tensor& y_j,
            const MixupConfig& c, Rng& rng);

// Batch form: one lambda per batch, partners from a seeded permutation.
// inputs [batch, ...], targets [batch, labels]; modified in place.
double mixup_batch(Tensor& inputs, Tensor& targets, const MixupConfig& c, Rng& rng);

}  // namespace scalenet::augment
