#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace skillforge {

// Seeded generator with platform-independent derived distributions.
// std::mt19937_64 output is fixed by the standard; the std distributions are
// not, so bounded integers and reals are derived here.
__extension__ using uint128 = unsigned __int128;

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> streams = {})
      : engine_(mix(seed, streams)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-and-reject.
    std::uint64_t x = next();
    uint128 m = static_cast<uint128>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = next();
        m = static_cast<uint128>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform integer in [lo, hi].
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }

  // Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return p >= 1.0 || uniform01() < p; }

 private:
  static std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> streams) {
    std::uint64_t state = seed;
    std::uint64_t out = splitmix(state);
    for (std::uint64_t s : streams) {
      state ^= s + 0x632BE59BD9B4E019ULL;
      out = splitmix(state);
    }
    return out;
  }

  std::mt19937_64 engine_;
};

}  // namespace skillforge
