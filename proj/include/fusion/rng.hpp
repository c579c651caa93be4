#pragma once

#include <cstdint>

#include "fusion/common.hpp"

namespace fusion {

// Deterministic 64-bit PRNG with explicit (seed, stream) addressing.
//
// Stream derivation uses splitmix64 over the seed and a stream key so that
// independently named consumers (parameter init, dropout sites, shuffles,
// tie-breaks) get decorrelated sequences from one experiment seed. The
// generator core is xoshiro256++ seeded from four splitmix64 outputs.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL);
    for (auto& w : s_) w = splitmix64(x);
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Hash a string to a stream key, for named streams.
  static std::uint64_t stream_key(const char* name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (const char* p = name; *p; ++p) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(*p));
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit mantissa.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // Rejection sampling keeps the distribution exact.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace fusion
