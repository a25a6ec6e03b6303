#pragma once

// Deterministic RNG. splitmix64 state transition with derived streams so
// (seed, stream) pairs give independent, platform-stable sequences; the
// normal sampler is Box-Muller, so no libstdc++ distribution quirks leak
// into checkpoints or telemetry.

#include <cmath>
#include <cstdint>
#include <span>

namespace burnkit {

namespace detail {
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

class Rng {
public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : state_(detail::mix64(seed) ^ detail::mix64(~stream * 0x9e3779b97f4a7c15ULL)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    return n <= 1 ? 0 : static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so log stays finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void fill_uniform(std::span<T> out, double lo, double hi) {
    for (auto& v : out) v = static_cast<T>(uniform(lo, hi));
  }

  template <typename T>
  void fill_normal(std::span<T> out, double mean = 0.0, double stddev = 1.0) {
    for (auto& v : out) v = static_cast<T>(mean + stddev * normal());
  }

  // Fisher-Yates over indices [0, n).
  template <typename Index>
  void shuffle(std::span<Index> idx) {
    for (int64_t i = static_cast<int64_t>(idx.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
  }

private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace burnkit
