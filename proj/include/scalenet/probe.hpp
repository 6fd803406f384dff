#pragma once

#include <cstdint>
#include <vector>

#include "scalenet/resnet1d.hpp"

namespace scalenet::net {

// Copy of `model` with every weight set to 1, identity BN statistics and no
// dropout. With a zero baseline input, an output position is non-zero exactly
// when it is structurally connected to a non-zero input sample.
ResNet1d make_probe_model(const ResNet1d& model);

// Pre-GAP output positions whose value changes by more than `threshold` when
// input sample `position` of `lead` is raised from 0 to 1. Positions outside
// [0, input_length) perturb nothing and yield an empty list.
std::vector<std::int64_t> impulse_response(ResNet1d& probe_model, std::int64_t input_length,
                                           std::int64_t position, int lead = 0,
                                           double threshold = 1e-12);

// Empirical receptive field: the count of affected outputs, summed over one
// full period of the network's total stride of consecutive impulse positions
// around the centre of the input, equals the number of input samples feeding
// one output. Throws ShapeError if `input_length` is too short for an
// unclipped measurement.
std::int64_t probe_receptive_field(const ResNet1d& model, std::int64_t input_length);

// Doubles the input length until the measurement is unclipped.
std::int64_t probe_receptive_field_auto(const ResNet1d& model, std::int64_t start_length = 256,
                                        std::int64_t max_length = 1 << 16);

}  // namespace scalenet::net
