#include "scalenet/probe.hpp"

#include <cmath>

#include "scalenet/error.hpp"

namespace scalenet::net {

namespace {

constexpr const char* kModule = "resnet1d";

}  // namespace

ResNet1d make_probe_model(const ResNet1d& model) {
  ResNet1d probe(model.spec(), model.seed(), 0.0);
  probe.fill_weights(1.0);
  return probe;
}

std::vector<std::int64_t> impulse_response(ResNet1d& probe_model, std::int64_t input_length,
                                           std::int64_t position, int lead, double threshold) {
  const auto length = static_cast<std::size_t>(input_length);
  Tensor x({1, static_cast<std::size_t>(net::kInputLeads), length});
  const Tensor baseline = probe_model.features(x);
  if (position < 0 || position >= input_length) return {};
  x.at(0, static_cast<std::size_t>(lead), static_cast<std::size_t>(position)) = 1.0;
  const Tensor perturbed = probe_model.features(x);
  if (!perturbed.all_finite()) {
    throw NumericError(kModule, "probe activations overflowed; network too large to probe");
  }

  const std::size_t channels = perturbed.dim(1), lout = perturbed.dim(2);
  std::vector<std::int64_t> affected;
  for (std::size_t o = 0; o < lout; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      if (std::abs(perturbed.at(0, c, o) - baseline.at(0, c, o)) > threshold) {
        affected.push_back(static_cast<std::int64_t>(o));
        break;
      }
    }
  }
  return affected;
}

std::int64_t probe_receptive_field(const ResNet1d& model, std::int64_t input_length) {
  ResNet1d probe = make_probe_model(model);
  const std::int64_t period = total_stride(model.spec());
  const auto shapes = output_shapes(model.spec(), input_length);
  const std::int64_t lout = shapes.back().length;
  const std::int64_t start = input_length / 2 - period / 2;
  if (start < 0 || start + period > input_length) {
    throw ShapeError(kModule, "length", "probe input shorter than one stride period");
  }

  std::int64_t total = 0;
  for (std::int64_t i = start; i < start + period; ++i) {
    const auto affected = impulse_response(probe, input_length, i);
    if (affected.empty()) {
      throw NumericError(kModule, "impulse at " + std::to_string(i) + " reached no output");
    }
    // Touching either end means part of the response may lie outside the map.
    if (affected.front() == 0 || affected.back() == lout - 1) {
      throw ShapeError(kModule, "length",
                       "probe input length " + std::to_string(input_length) +
                           " clips the response; use a longer input");
    }
    total += static_cast<std::int64_t>(affected.size());
  }
  return total;
}

std::int64_t probe_receptive_field_auto(const ResNet1d& model, std::int64_t start_length,
                                        std::int64_t max_length) {
  for (std::int64_t length = start_length; length <= max_length; length *= 2) {
    try {
      return probe_receptive_field(model, length);
    } catch (const ShapeError&) {
    }
  }
  throw ShapeError(kModule, "length",
                   "receptive field probe did not fit within " + std::to_string(max_length) +
                       " samples");
}

}  // namespace scalenet::net
