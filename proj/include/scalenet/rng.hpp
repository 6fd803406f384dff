#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scalenet {

// Seeded random stream. Streams are derived from (seed, name, index) so that
// independent consumers (init, shuffle, augment, dropout, ...) never share
// state and a run is replayable from its seeds alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double log_uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double beta(double a, double b);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

}  // namespace scalenet
