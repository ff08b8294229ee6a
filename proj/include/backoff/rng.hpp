#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace backoff {

// SplitMix64 finalizer. Used both to seed xoshiro state and to derive
// independent per-station / per-trial stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of sub-stream `stream_id` under `root`. The mapping is fixed and
/// documented so a trace can be reproduced from (root, id) alone:
///
///     derive_seed(root, id) = mix64(root ^ mix64(id))
///
/// Station i of a trial with seed s draws from derive_seed(s, i).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream_id) noexcept {
  return mix64(root ^ mix64(stream_id));
}

__extension__ using uint128 = unsigned __int128;

// xoshiro256** by Blackman and Vigna. Small state (32 bytes) so that one
// generator per station stays cheap at n = 10^5 and beyond.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t seed = 0) noexcept {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      word = z ^ (z >> 31);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection,
  /// so the result is exactly uniform and identical on every platform.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    uint128 m = static_cast<uint128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<uint128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// True with probability exactly 2^-exponent (exponent <= 63).
  constexpr bool one_in_pow2(unsigned exponent) noexcept {
    if (exponent == 0) return true;
    const std::uint64_t mask = (std::uint64_t{1} << exponent) - 1;
    return ((*this)() & mask) == 0;
  }

  /// Uniform double in [0, 1) with 53 bits of precision.
  constexpr double uniform01() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace backoff
