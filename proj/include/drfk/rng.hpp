#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "drfk/common.hpp"

namespace drfk {

// Seeded generator with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard, but the std distributions are not; rolling our own
// keeps streams bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return double(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    require(n >= 1, "Rng::uniform_int: n must be >= 1, got ", n);
    return int(bits() % std::uint64_t(n));
  }

  bool bernoulli(double p = 0.5) { return uniform() < p; }

  // Box-Muller, one draw per call (no cached spare, keeps the stream simple)
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace drfk
