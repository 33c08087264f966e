#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace popdns {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mix an arbitrary argument list into one 64-bit value. Used for
/// counter-based randomness where draws must not depend on visit order
/// (per-record churn, domain universe attributes).
inline uint64_t hash_mix(uint64_t a) { return splitmix64(a); }
template <typename... Rest>
uint64_t hash_mix(uint64_t a, uint64_t b, Rest... rest) {
  return hash_mix(splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2))), rest...);
}

inline uint64_t hash_str(std::string_view s, uint64_t seed = 0) {
  uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix64(h);
}

/// Deterministic random source. xoshiro256** seeded via splitmix64;
/// identical seeds give identical streams on every platform, which the
/// simulator depends on. Distribution helpers are hand-rolled for the
/// same reason (std:: distributions vary between standard libraries).
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t x = seed;
    for (auto& word : state_) word = x = splitmix64(x + 0x1234567);
  }

  uint64_t next_u64() {
    uint64_t* s = state_;
    uint64_t result = rotl(s[1] * 5, 7) * 9;
    uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }

  /// Uniform in [0, bound). bound = 0 is invalid.
  uint64_t uniform(uint64_t bound) {
    // rejection sampling to avoid modulo bias
    uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53-bit resolution.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform01() < p;
  }

  /// Exponential with the given mean (inter-arrival times).
  double exponential(double mean) {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return -mean * std::log(u);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(uniform(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  void fill(uint8_t* out, size_t n) {
    size_t i = 0;
    while (i + 8 <= n) {
      uint64_t r = next_u64();
      for (int b = 0; b < 8; ++b) out[i++] = uint8_t(r >> (8 * b));
    }
    if (i < n) {
      uint64_t r = next_u64();
      for (int b = 0; b < 8 && i < n; ++b) out[i++] = uint8_t(r >> (8 * b));
    }
  }

  /// Derive an independent substream from the original seed. Pure: does not
  /// consume state, so the derived stream depends only on (seed, tag, index).
  /// Keeps e.g. mix-network draws from perturbing churn draws.
  Rng derive(std::string_view tag, uint64_t index = 0) const {
    return Rng(hash_mix(seed_, hash_str(tag), index));
  }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t seed_;
  uint64_t state_[4];
};

}  // namespace popdns
