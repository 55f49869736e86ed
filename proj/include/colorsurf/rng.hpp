#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace colorsurf {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG with explicit distributions (std:: distribution objects are
// implementation-defined, which would break cross-platform reproducibility).
// Training derives one Rng per (seed, iteration) so resuming from a checkpoint
// needs no serialized generator state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  Rng(uint64_t seed, uint64_t stream) : eng_(splitmix64(seed ^ splitmix64(stream))) {}

  uint64_t bits() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (pair cached)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // uniform integer in [0, n), n >= 1 (Lemire multiply-shift, debiased)
  uint64_t index(uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(eng_()) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t thresh = (0 - n) % n;
      while (lo < thresh) {
        m = static_cast<__uint128_t>(eng_()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace colorsurf
