#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace eob {

// Mixes a base seed with stream coordinates so that every independent unit
// of work (a grid cell, a product, a household) draws from its own stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

// Thin wrapper over mt19937_64 with distributions implemented here rather
// than through <random>, whose distribution algorithms vary between
// standard libraries. Output is reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // Gamma(shape, scale) via Marsaglia-Tsang.
  double gamma(double shape, double scale);
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace eob
