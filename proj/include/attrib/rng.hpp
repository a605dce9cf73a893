#pragma once

#include <cstdint>

namespace attrib {

// SplitMix64 generator. All randomness in the library flows through this
// type so that runs are bit-for-bit reproducible across platforms. Each
// consumer (init, dropout, shuffling, sampling) derives its own stream via
// stream(), so adding draws to one consumer never perturbs another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t next_below(std::uint64_t n) {
    // Rejection sampling keeps the distribution exactly uniform.
    const std::uint64_t limit = (~0ULL) - ((~0ULL) % n + 1) % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x > limit);
    return x % n;
  }

  // Derives an independent child generator. The mixing constant decorrelates
  // streams even for adjacent ids.
  Rng stream(std::uint64_t id) const {
    Rng r(state_ ^ (0x6a09e667f3bcc909ULL + id * 0x9e3779b97f4a7c15ULL));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t state_;
};

// Fixed stream ids per consumer.
namespace rng_stream {
constexpr std::uint64_t kInit = 1;
constexpr std::uint64_t kDropout = 2;
constexpr std::uint64_t kShuffle = 3;
constexpr std::uint64_t kSampling = 4;
constexpr std::uint64_t kSplit = 5;
}  // namespace rng_stream

}  // namespace attrib
