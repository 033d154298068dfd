#pragma once

#include <cstdint>
#include <random>

#include "conad/common.hpp"

namespace conad {

/// Seeded random source with hand-rolled uniform draws.
///
/// std::mt19937_64 output is pinned by the standard, but the distribution
/// classes are not; drawing through explicit arithmetic keeps generated
/// datasets bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Unbiased integer in [0, n) via bitmask rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) fail("Rng::uniform_below: n must be positive");
    std::uint64_t mask = ~std::uint64_t{0};
    mask >>= __builtin_clzll(n | 1);
    for (;;) {
      const std::uint64_t v = engine_() & mask;
      if (v < n) return v;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace conad
