#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace dcpt {

/// xoshiro256** seeded through splitmix64. All derived draws (uniform reals,
/// bounded integers, shuffles) are implemented here rather than through
/// <random> distributions so sequences are identical across platforms.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  /// Independent stream keyed by `salt`; the parent state is untouched.
  RandomSource fork(std::uint64_t salt) const;

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace dcpt
