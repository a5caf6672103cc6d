#pragma once

#include <cstdint>

namespace ecnn {

/// SplitMix64. Pure 64-bit integer recurrence, so streams are identical on
/// every platform and easy to reproduce from other languages.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // plain rejection sampling
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  /// Derive an independent stream, e.g. one per sample or per purpose.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
    SplitMix64 g(a ^ (b * 0xD1B54A32D192ED03ULL));
    return g.next();
  }

 private:
  std::uint64_t state_;
};

}  // namespace ecnn
