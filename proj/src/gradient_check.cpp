#include "scalenet/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "scalenet/error.hpp"
#include "scalenet/rng.hpp"

namespace scalenet {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradientCheckReport gradient_check(const std::function<double()>& loss,
                                   std::span<const GradientProbe> probes,
                                   const GradientCheckOptions& options) {
  GradientCheckReport report;
  Rng rng = Rng::stream(options.seed, "gradient_check");
  for (const auto& probe : probes) {
    if (!probe.value || !probe.analytic) {
      throw ConfigError("tensor_ops", "gradient probe '" + probe.name + "' has null tensors");
    }
    if (probe.value->shape() != probe.analytic->shape()) {
      throw ShapeError("tensor_ops", probe.name, "value and analytic gradient shapes differ");
    }
    std::vector<std::size_t> indices(probe.value->size());
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_elements_per_tensor > 0 && indices.size() > options.max_elements_per_tensor) {
      for (std::size_t i = 0; i < options.max_elements_per_tensor; ++i) {
        std::swap(indices[i], indices[i + rng.index(indices.size() - i)]);
      }
      indices.resize(options.max_elements_per_tensor);
    }

    double& tensor_max = report.max_rel_error_by_tensor[probe.name];
    double& type_max = report.max_rel_error_by_layer_type[probe.layer_type];
    for (std::size_t idx : indices) {
      double& v = (*probe.value)[idx];
      const double saved = v;
      v = saved + options.step;
      const double up = loss();
      v = saved - options.step;
      const double down = loss();
      v = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error((*probe.analytic)[idx], numeric, options.denominator_floor);
      tensor_max = std::max(tensor_max, err);
      type_max = std::max(type_max, err);
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.probes;
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace scalenet
