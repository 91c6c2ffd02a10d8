#pragma once

#include <cmath>
#include <cstdint>

namespace df {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic mix of a seed with stream identifiers; used to derive
// independent RNG streams (per chapter, per parameter, per sample).
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = seed;
  (void)splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ull * (a + 1);
  (void)splitmix64(s);
  s ^= 0xc2b2ae3d27d4eb4full * (b + 1);
  (void)splitmix64(s);
  s ^= 0x165667b19e3779f9ull * (c + 1);
  return splitmix64(s);
}

// PCG32: small, fast, reproducible across platforms. All randomness in the
// project flows through this type so runs are bit-repeatable given a seed.
class Pcg32 {
public:
  Pcg32() : Pcg32(0x853c49e6748fea9bull) {}
  explicit Pcg32(uint64_t seed, uint64_t stream = 0xda3e39cb94b95bdbull) {
    state_ = 0;
    inc_ = (stream << 1) | 1;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18) ^ old) >> 27);
    uint32_t rot = static_cast<uint32_t>(old >> 59);
    return (xorshifted >> rot) | (xorshifted << ((32 - rot) & 31));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // i in [0, n)
  uint32_t uniform_int(uint32_t n) {
    // Lemire-style rejection-free enough for our n << 2^32 use; bias < 2^-32.
    return static_cast<uint32_t>((static_cast<uint64_t>(next_u32()) * n) >> 32);
  }

  double normal() {
    // Box-Muller; consumes exactly two uniforms, caches nothing.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  uint64_t state() const { return state_; }

private:
  uint64_t state_;
  uint64_t inc_;
};

template <typename It>
void shuffle(It first, It last, Pcg32& rng) {
  auto n = static_cast<uint64_t>(last - first);
  for (uint64_t i = n; i > 1; --i) {
    uint64_t j = rng.uniform_int(static_cast<uint32_t>(i));
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace df
