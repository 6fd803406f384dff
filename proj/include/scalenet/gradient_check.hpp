#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "scalenet/tensor.hpp"

namespace scalenet {

// One tensor to probe: `value` is perturbed in place, `analytic` holds the
// gradient of the scalar loss with respect to it.
struct GradientProbe {
  std::string layer_type;  // e.g. "conv", "batchnorm", "input"
  std::string name;
  Tensor* value = nullptr;
  const Tensor* analytic = nullptr;
};

struct GradientCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  // Denominator floor for the relative error, so that gradients that are
  // zero up to rounding do not blow up the ratio.
  double denominator_floor = 1e-8;
  // 0 = probe every element; otherwise a seeded subset of this many per tensor.
  std::size_t max_elements_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradientCheckReport {
  std::map<std::string, double> max_rel_error_by_layer_type;
  std::map<std::string, double> max_rel_error_by_tensor;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool passed = true;
};

// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor) where
// numeric is the central difference (f(x+h) - f(x-h)) / 2h.
double relative_error(double analytic, double numeric, double floor);

// Central-difference comparison per probed element. `loss` must recompute the
// scalar objective from the current values of all probed tensors. Every
// perturbed element is restored bit-exactly.
GradientCheckReport gradient_check(const std::function<double()>& loss,
                                   std::span<const GradientProbe> probes,
                                   const GradientCheckOptions& options = {});

}  // namespace scalenet
