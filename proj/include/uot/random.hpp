#pragma once

#include <cstdint>

#include "uot/common.hpp"

namespace uot {

/// SplitMix64 finalizer; bijective avalanche on 64-bit words.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Root of a deterministic random stream. Replica k draws from the derived
/// seed value ^ splitmix64(k), which does not depend on how many replicas
/// run or on their scheduling.
struct Seed {
  std::uint64_t value = 0;

  Seed replica(std::uint64_t k) const { return Seed{value ^ splitmix64(k)}; }
};

/// Counter-based generator over splitmix64. All draws are pure functions of
/// the seed and the call sequence, so equal seeds give bit-identical streams.
class Rng {
public:
  explicit Rng(Seed seed) : state_(seed.value) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via the polar method.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace uot
