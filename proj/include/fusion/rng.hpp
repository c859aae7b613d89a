#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>

namespace fusion {

/// Seedable, splittable CSPRNG: ChaCha20 keystream under a key derived from (seed, label path).
/// Satisfies UniformRandomBitGenerator. Output is identical across platforms for a given seed.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  /// Independent child stream. Children with distinct (label, index) never share keystream.
  Rng derive(std::string_view label, std::uint64_t index = 0) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform integer in [0, bound); bound must be nonzero. Rejection sampling, no modulo bias.
  std::uint64_t uniform(std::uint64_t bound);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

 private:
  using Key = std::array<unsigned char, 32>;
  explicit Rng(const Key& key);
  void refill();

  Key key_{};
  std::array<unsigned char, 512> buffer_{};
  std::size_t pos_ = 512;
  std::uint64_t block_nonce_ = 0;
};

/// Fisher-Yates shuffle driven by Rng::uniform, so orderings are reproducible across stdlibs.
template <class It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t k = n; k > 1; --k) {
    const std::uint64_t j = rng.uniform(k);
    using std::swap;
    swap(first[k - 1], first[j]);
  }
}

}  // namespace fusion
