#pragma once

#include <cmath>
#include <cstdint>

namespace pagetext {

// Counter-based pseudo-random generator: the i-th draw is a pure function of
// (seed, i), so streams are reproducible across platforms and can be split
// into independent child streams without sharing state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() { return mix(seed_ + kGamma * ++counter_); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [lo, hi] inclusive
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<int64_t>(next_u64());  // full range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return lo + static_cast<int64_t>(r % span);
  }

  // standard normal, Box-Muller; always consumes two draws
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream. Children with distinct ids never collide with
  // each other or with the parent.
  Rng split(uint64_t stream_id) const {
    return Rng(mix(seed_ ^ mix(0x6A09E667F3BCC909ull + stream_id)));
  }

  uint64_t seed() const { return seed_; }

 private:
  static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  static uint64_t mix(uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
  }

  uint64_t seed_;
  uint64_t counter_ = 0;
};

}  // namespace pagetext
