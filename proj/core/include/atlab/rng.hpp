#pragma once

#include <cmath>
#include <cstdint>

namespace atlab {

// PCG32. Self-contained so that seeded transcripts are stable across
// standard libraries; std::uniform_real_distribution makes no such promise.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(uint64_t seed, uint64_t stream = 0) {
    inc_ = (stream << 1u) | 1u;
    state_ = 0u;
    next_u32();
    state_ += seed;
    next_u32();
    have_gauss_ = false;
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Unbiased integer in [0, bound).
  uint32_t uniform_u32(uint32_t bound) {
    uint32_t threshold = (-bound) % bound;
    for (;;) {
      uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform in [0, 1).
  float uniform_float() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

  // Uniform in [lo, hi).
  float uniform_float(float lo, float hi) { return lo + (hi - lo) * uniform_float(); }

  // Box-Muller, pair-cached.
  float gaussian() {
    if (have_gauss_) {
      have_gauss_ = false;
      return gauss_;
    }
    float u1, u2;
    do {
      u1 = uniform_float();
    } while (u1 <= 1e-12f);
    u2 = uniform_float();
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.28318530717958647692f * u2;
    gauss_ = r * std::sin(a);
    have_gauss_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(float p) { return uniform_float() < p; }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 1;
  float gauss_ = 0.0f;
  bool have_gauss_ = false;
};

}  // namespace atlab
