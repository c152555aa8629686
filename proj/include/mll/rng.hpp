#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mll {

// Counter-based pseudo-random generator (splitmix64 finalizer over a keyed
// counter). Streams derived from (seed, stream index) are independent, so
// trial-level parallelism keeps campaigns deterministic regardless of
// scheduling. All sampling in the project flows through this type; the C++
// standard distributions are avoided because their output is not pinned
// across implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Independent stream for (this key, stream index). Used per campaign trial.
  Rng derive(std::uint64_t stream) const {
    Rng r(0);
    r.key_ = mix(key_ + mix(stream + 0x632be59bd9b4e019ull));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller. Two uniforms per draw, no caching, so the
  // consumption pattern is reproducible.
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace mll
