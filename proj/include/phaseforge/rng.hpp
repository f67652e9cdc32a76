#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace phaseforge {

// SplitMix64 step; also the seed-derivation mixer.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stage/stream seeds all fan out from one root seed through this rule, so any
// sub-experiment can be reproduced in isolation:
//   child = mix(root ^ fnv1a64(tag))
inline uint64_t derive_seed(uint64_t root, std::string_view tag) {
  uint64_t s = root ^ fnv1a64(tag);
  return splitmix64(s);
}

inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t index) {
  uint64_t s = root ^ fnv1a64(tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(s);
}

// Deterministic PRNG. Distributions are hand-rolled (no std::*_distribution)
// so streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), rejection sampled.
  uint64_t below(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller with a cached spare.
  double normal(double mean = 0.0, double std = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + std * spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + std * r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace phaseforge
