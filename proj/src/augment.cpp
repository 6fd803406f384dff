#include "scalenet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scalenet/error.hpp"

namespace scalenet::augment {

namespace {

constexpr const char* kModule = "augment";
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t leads_of(const Tensor& x) { return x.dim(0); }
std::size_t length_of(const Tensor& x) { return x.dim(1); }

// Linear interpolation of `in` at fractional position `pos`, clamped to the ends.
double sample_at(std::span<const double> in, double pos) {
  if (pos <= 0.0) return in.front();
  const auto last = static_cast<double>(in.size() - 1);
  if (pos >= last) return in.back();
  const auto i0 = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i0);
  return frac == 0.0 ? in[i0] : in[i0] + frac * (in[i0 + 1] - in[i0]);
}

// Resamples every lead at positions position(j), j in [0, length).
template <typename F>
Tensor remap(const Tensor& x, F position) {
  Tensor out(x.shape());
  for (std::size_t l = 0; l < leads_of(x); ++l) {
    const auto in = x.row(l);
    auto dst = out.row(l);
    for (std::size_t j = 0; j < length_of(x); ++j) dst[j] = sample_at(in, position(j));
  }
  return out;
}

// Centred moving average with window 2 * half + 1, shrinking at the edges.
std::vector<double> moving_average(std::span<const double> in, std::size_t half) {
  const std::size_t n = in.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + in[i];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

// x + s * (smoothed(x) - x) per lead.
template <typename Smooth>
Tensor blend_with(const Tensor& x, double s, Smooth smooth) {
  Tensor out = x;
  if (s == 0.0) return out;
  for (std::size_t l = 0; l < leads_of(x); ++l) {
    const auto sm = smooth(x.row(l));
    auto dst = out.row(l);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * (sm[j] - dst[j]);
  }
  return out;
}

template <typename F>
Tensor add_per_sample(const Tensor& x, F value) {
  Tensor out = x;
  for (std::size_t l = 0; l < leads_of(x); ++l) {
    auto dst = out.row(l);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += value(l, j);
  }
  return out;
}

std::vector<Transform> build_registry() {
  std::vector<Transform> r;
  r.push_back({"amplitude_scale", "max relative change of the global gain (50% at 10)", "fraction",
               [](const Tensor& x, double s, int, Rng& rng) {
                 Tensor out = x;
                 out *= 1.0 + 0.5 * s * rng.uniform(-1.0, 1.0);
                 return out;
               }});
  r.push_back({"baseline_wander", "amplitude of a 0.05-0.5 Hz sinusoid (0.5 mV at 10)", "mV",
               [](const Tensor& x, double s, int hz, Rng& rng) {
                 const double f = rng.uniform(0.05, 0.5), phase = rng.uniform(0.0, kTwoPi);
                 return add_per_sample(x, [&](std::size_t, std::size_t j) {
                   return 0.5 * s * std::sin(kTwoPi * f * static_cast<double>(j) / hz + phase);
                 });
               }});
  r.push_back({"gaussian_noise", "standard deviation of white noise (0.1 mV at 10)", "mV",
               [](const Tensor& x, double s, int, Rng& rng) {
                 return add_per_sample(x, [&](std::size_t, std::size_t) { return 0.1 * s * rng.normal(); });
               }});
  r.push_back({"powerline_noise", "amplitude of 50/60 Hz interference (0.2 mV at 10)", "mV",
               [](const Tensor& x, double s, int hz, Rng& rng) {
                 const double f = rng.bernoulli(0.5) ? 50.0 : 60.0, phase = rng.uniform(0.0, kTwoPi);
                 return add_per_sample(x, [&](std::size_t, std::size_t j) {
                   return 0.2 * s * std::sin(kTwoPi * f * static_cast<double>(j) / hz + phase);
                 });
               }});
  r.push_back({"time_shift", "max circular shift (50% of the record at 10)", "fraction of length",
               [](const Tensor& x, double s, int, Rng& rng) {
                 const auto n = static_cast<std::ptrdiff_t>(length_of(x));
                 const auto shift = static_cast<std::ptrdiff_t>(
                     std::llround(rng.uniform(-1.0, 1.0) * 0.5 * s * static_cast<double>(n)));
                 Tensor out(x.shape());
                 for (std::size_t l = 0; l < leads_of(x); ++l) {
                   const auto in = x.row(l);
                   auto dst = out.row(l);
                   for (std::ptrdiff_t j = 0; j < n; ++j) dst[static_cast<std::size_t>(((j + shift) % n + n) % n)] = in[static_cast<std::size_t>(j)];
                 }
                 return out;
               }});
  r.push_back({"time_mask", "length of a zeroed window (20% of the record at 10)", "fraction of length",
               [](const Tensor& x, double s, int, Rng& rng) {
                 const std::size_t n = length_of(x);
                 const auto width = static_cast<std::size_t>(std::llround(0.2 * s * static_cast<double>(n)));
                 const std::size_t start = rng.index(n - width + 1);
                 Tensor out = x;
                 for (std::size_t l = 0; l < leads_of(x); ++l) {
                   auto dst = out.row(l);
                   std::fill_n(dst.begin() + static_cast<std::ptrdiff_t>(start), width, 0.0);
                 }
                 return out;
               }});
  r.push_back({"lead_dropout", "per-lead probability of zeroing (50% at 10)", "probability",
               [](const Tensor& x, double s, int, Rng& rng) {
                 Tensor out = x;
                 for (std::size_t l = 0; l < leads_of(x); ++l) {
                   if (rng.bernoulli(0.5 * s)) std::ranges::fill(out.row(l), 0.0);
                 }
                 return out;
               }});
  r.push_back({"limb_lead_shuffle", "probability of permuting limb leads within their group (100% at 10)",
               "probability", [](const Tensor& x, double s, int, Rng& rng) {
                 Tensor out = x;
                 if (leads_of(x) < 6 || !rng.bernoulli(s)) return out;
                 for (std::size_t group : {0u, 3u}) {
                   std::size_t perm[3] = {0, 1, 2};
                   for (std::size_t i = 2; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
                   for (std::size_t i = 0; i < 3; ++i) {
                     const auto in = x.row(group + perm[i]);
                     std::ranges::copy(in, out.row(group + i).begin());
                   }
                 }
                 return out;
               }});
  r.push_back({"random_resize", "max time-axis stretch (30% at 10), cropped or edge-padded to length",
               "fraction", [](const Tensor& x, double s, int, Rng& rng) {
                 const double factor = 1.0 + 0.3 * s * rng.uniform(-1.0, 1.0);
                 return remap(x, [&](std::size_t j) { return static_cast<double>(j) / factor; });
               }});
  r.push_back({"low_pass", "moving-average half-width (4 samples at 10)", "samples",
               [](const Tensor& x, double s, int, Rng&) {
                 const auto half = static_cast<std::size_t>(std::llround(4.0 * s));
                 Tensor out = x;
                 if (half == 0) return out;
                 for (std::size_t l = 0; l < leads_of(x); ++l) {
                   const auto sm = moving_average(x.row(l), half);
                   std::ranges::copy(sm, out.row(l).begin());
                 }
                 return out;
               }});
  r.push_back({"high_pass", "fraction of the 0.5 s moving-average baseline removed (100% at 10)",
               "fraction", [](const Tensor& x, double s, int hz, Rng&) {
                 const auto half = static_cast<std::size_t>(hz / 4);
                 Tensor out = x;
                 if (s == 0.0) return out;
                 for (std::size_t l = 0; l < leads_of(x); ++l) {
                   const auto base = moving_average(x.row(l), half);
                   auto dst = out.row(l);
                   for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= s * base[j];
                 }
                 return out;
               }});
  r.push_back({"square_pulse", "amplitude of a 0.1 s rectangular artifact (1 mV at 10)", "mV",
               [](const Tensor& x, double s, int hz, Rng& rng) {
                 const std::size_t n = length_of(x);
                 const std::size_t width = std::min(n, static_cast<std::size_t>(std::max(1, hz / 10)));
                 const std::size_t start = rng.index(n - width + 1);
                 const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
                 return add_per_sample(x, [&](std::size_t, std::size_t j) {
                   return (j >= start && j < start + width) ? sign * s : 0.0;
                 });
               }});
  r.push_back({"sign_flip", "probability of negating every lead (50% at 10)", "probability",
               [](const Tensor& x, double s, int, Rng& rng) {
                 Tensor out = x;
                 if (rng.bernoulli(0.5 * s)) out *= -1.0;
                 return out;
               }});
  r.push_back({"time_warp", "peak sinusoidal time displacement (5% of the record at 10)",
               "fraction of length", [](const Tensor& x, double s, int, Rng& rng) {
                 const auto n = static_cast<double>(length_of(x));
                 const double amp = 0.05 * s * n * rng.uniform(-1.0, 1.0);
                 const double phase = rng.uniform(0.0, kTwoPi);
                 // |d'(t)| <= 2 pi * 0.05 < 1 keeps the warp monotone.
                 return remap(x, [&](std::size_t j) {
                   const auto t = static_cast<double>(j);
                   return t + amp * (std::sin(kTwoPi * t / n + phase) - std::sin(phase));
                 });
               }});
  r.push_back({"magnitude_warp", "depth of a smooth gain curve (30% at 10)", "fraction",
               [](const Tensor& x, double s, int, Rng& rng) {
                 const auto n = static_cast<double>(length_of(x));
                 const double cycles = rng.uniform(0.5, 3.0), phase = rng.uniform(0.0, kTwoPi);
                 Tensor out = x;
                 for (std::size_t l = 0; l < leads_of(x); ++l) {
                   auto dst = out.row(l);
                   for (std::size_t j = 0; j < dst.size(); ++j) {
                     dst[j] *= 1.0 + 0.3 * s * std::sin(kTwoPi * cycles * static_cast<double>(j) / n + phase);
                   }
                 }
                 return out;
               }});
  r.push_back({"window_slice", "fraction of the record cut away before stretching back (30% at 10)",
               "fraction of length", [](const Tensor& x, double s, int, Rng& rng) {
                 const auto n = static_cast<double>(length_of(x));
                 const double keep = (n - 1.0) * (1.0 - 0.3 * s);
                 const double start = rng.uniform(0.0, (n - 1.0) - keep);
                 const double step = n > 1.0 ? keep / (n - 1.0) : 0.0;
                 return remap(x, [&](std::size_t j) { return start + step * static_cast<double>(j); });
               }});
  r.push_back({"lead_gain_jitter", "standard deviation of independent per-lead gains (20% at 10)",
               "fraction", [](const Tensor& x, double s, int, Rng& rng) {
                 Tensor out = x;
                 for (std::size_t l = 0; l < leads_of(x); ++l) {
                   const double g = 1.0 + 0.2 * s * rng.normal();
                   for (auto& v : out.row(l)) v *= g;
                 }
                 return out;
               }});
  r.push_back({"smoothing", "blend weight towards a 5-sample moving average (100% at 10)", "fraction",
               [](const Tensor& x, double s, int, Rng&) {
                 return blend_with(x, s, [](std::span<const double> in) { return moving_average(in, 2); });
               }});
  return r;
}

}  // namespace

const std::vector<Transform>& default_registry() {
  static const std::vector<Transform> registry = build_registry();
  return registry;
}

const Transform& find_transform(const std::string& name) {
  for (const auto& t : default_registry()) {
    if (t.name == name) return t;
  }
  throw ConfigError(kModule, "unknown transform '" + name + "'");
}

void AugmentPolicy::validate() const {
  if (n_ops < 0 || n_ops > 2) throw ConfigError(kModule, "n_ops must lie in {0, 1, 2}");
  if (magnitude < 0 || magnitude > kMaxMagnitude) throw ConfigError(kModule, "magnitude must lie in 0..10");
  if (n_ops > 0 && (registry == nullptr || registry->empty())) {
    throw ConfigError(kModule, "augmentation registry is empty");
  }
}

Tensor apply_policy(const Tensor& signal, const AugmentPolicy& policy, Rng& rng, int sampling_rate_hz) {
  policy.validate();
  if (signal.rank() != 2) throw ShapeError(kModule, "rank", "augmentation expects [leads, samples]");
  Tensor out = signal;
  const double strength = static_cast<double>(policy.magnitude) / kMaxMagnitude;
  for (int op = 0; op < policy.n_ops; ++op) {
    const auto& t = (*policy.registry)[rng.index(policy.registry->size())];
    out = t.apply(out, strength, sampling_rate_hz, rng);
  }
  return out;
}

void MixupConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError(kModule, "mixup beta must be non-negative");
}

Mixed mix_with_lambda(const Tensor& x_i, const Tensor& y_i, const Tensor& x_j, const Tensor& y_j,
                      double lambda) {
  if (x_i.shape() != x_j.shape()) throw ShapeError(kModule, "x", "mixup inputs differ in shape");
  if (y_i.shape() != y_j.shape()) throw ShapeError(kModule, "y", "mixup targets differ in shape");
  Mixed m{x_i, y_i, lambda};
  for (std::size_t k = 0; k < m.x.size(); ++k) m.x[k] = lambda * x_i[k] + (1.0 - lambda) * x_j[k];
  for (std::size_t k = 0; k < m.y.size(); ++k) m.y[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
  return m;
}

Mixed mixup(const Tensor& x_i, const Tensor& y_i, const Tensor& x_j, const Tensor& y_j,
            const MixupConfig& c, Rng& rng) {
  c.validate();
  if (c.beta == 0.0) {
    if (x_i.shape() != x_j.shape()) throw ShapeError(kModule, "x", "mixup inputs differ in shape");
    return Mixed{x_i, y_i, 1.0};
  }
  return mix_with_lambda(x_i, y_i, x_j, y_j, rng.beta(c.beta, c.beta));
}

double mixup_batch(Tensor& inputs, Tensor& targets, const MixupConfig& c, Rng& rng) {
  c.validate();
  if (inputs.dim(0) != targets.dim(0)) throw ShapeError(kModule, "batch", "inputs and targets disagree");
  if (c.beta == 0.0) return 1.0;
  const std::size_t n = inputs.dim(0);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  const double lambda = rng.beta(c.beta, c.beta);
  const Tensor x0 = inputs, y0 = targets;
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = inputs.row(i);
    const auto xj = x0.row(perm[i]);
    for (std::size_t k = 0; k < xi.size(); ++k) xi[k] = lambda * xi[k] + (1.0 - lambda) * xj[k];
    auto yi = targets.row(i);
    const auto yj = y0.row(perm[i]);
    for (std::size_t k = 0; k < yi.size(); ++k) yi[k] = lambda * yi[k] + (1.0 - lambda) * yj[k];
  }
  return lambda;
}

}  // namespace scalenet::augment
