#pragma once

#include <cmath>
#include <cstdint>

namespace dpr {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based splitmix64 stream. Hand-rolled (including the gaussian and
// bounded-int draws) so that every generated artifact is bit-reproducible
// across standard libraries and compilers. fork(seed, stream) derives
// statistically independent streams, which is what makes per-example
// parallel generation order- and thread-count-independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed)) {}

  static Rng fork(std::uint64_t seed, std::uint64_t stream) {
    Rng r(0);
    r.state_ = mix64(mix64(seed) ^ mix64(stream ^ 0xda3e39cb94b95bdbULL));
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased uniform integer in [0, n) via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Box-Muller, uncached.
  double gaussian() {
    double u1 = next_double();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  std::uint64_t state_;
};

// Named sub-streams so independent uses of one experiment seed never collide.
namespace stream {
constexpr std::uint64_t kModelInit = 0x11;
constexpr std::uint64_t kBatch = 0x22;
constexpr std::uint64_t kAugment = 0x33;
constexpr std::uint64_t kSplit = 0x44;
constexpr std::uint64_t kExampleBase = 0x1000000;  // + example index
constexpr std::uint64_t kTrial = 0x55;
}  // namespace stream

}  // namespace dpr
