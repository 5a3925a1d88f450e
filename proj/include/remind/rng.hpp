#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace remind {

// PCG32 (Melissa O'Neill's pcg32-xsh-rr). 64-bit state, 64-bit stream
// selector. All randomness in the engine flows from one root seed through
// explicit split() calls; nothing reads ambient entropy.
class Pcg32 {
 public:
  static constexpr const char* kName = "pcg32";

  explicit Pcg32(uint64_t seed, uint64_t stream = 0) {
    inc_ = (stream << 1u) | 1u;
    state_ = 0;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1).
  double next_double() {
    return (next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform index in [0, n). Lemire's multiply-shift, unbiased.
  size_t uniform_index(size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n == 0");
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * static_cast<__uint128_t>(n);
    uint64_t l = static_cast<uint64_t>(m);
    if (l < n) {
      uint64_t t = (0 - static_cast<uint64_t>(n)) % n;
      while (l < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * static_cast<__uint128_t>(n);
        l = static_cast<uint64_t>(m);
      }
    }
    return static_cast<size_t>(m >> 64);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller (no caching, so split streams stay
  // reproducible regardless of draw parity).
  double normal() {
    double u = 0.0;
    do { u = next_double(); } while (u <= 0.0);
    double v = next_double();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
  double gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("gamma: shape <= 0");
    if (shape < 1.0) {
      double u = 0.0;
      do { u = next_double(); } while (u <= 0.0);
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  // Derive an independent child stream. Children with distinct tags from the
  // same parent state have distinct (state, increment) pairs.
  Pcg32 split(uint64_t tag) {
    uint64_t s = next_u64();
    return Pcg32(s ^ (0x9E3779B97F4A7C15ULL * (tag + 1)), tag + 1);
  }

 private:
  uint64_t state_;
  uint64_t inc_;
};

}  // namespace remind
