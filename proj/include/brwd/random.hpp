#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace brwd {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, used to turn experiment names into seed tags.
constexpr std::uint64_t hash_tag(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for sub-stream (a, b) of seed. Changing any argument gives an
/// unrelated seed, so adding replicas never perturbs existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(seed) ^ a) + 0x632be59bd9b4e019ULL * (b + 1));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept {
  return derive_seed(seed, hash_tag(tag), index);
}

using Philox4x32Block = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
Philox4x32Block philox4x32(Philox4x32Block ctr, Philox4x32Key key) noexcept;

/// Counter-based stream: the n-th output is philox(n, key). Copyable, and
/// two streams with the same key produce the same sequence.
class CounterStream {
 public:
  CounterStream() = default;
  explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const Philox4x32Block out = philox4x32(
        {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
        {static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)});
    ++counter_;
    spare_ = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    have_spare_ = true;
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool have_spare_ = false;
};

/// xoshiro256** seeded through SplitMix64. Sequential generator for work
/// that does not need random access.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t z = seed;
    for (auto& w : s_) {
      z += 0x9e3779b97f4a7c15ULL;
      w = mix64(z - 0x9e3779b97f4a7c15ULL);
    }
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

// Distribution helpers. They work with any generator exposing next_u64(), and
// consume a fixed number of draws so that coupled streams stay aligned.

/// Uniform on [0, 1) with 53 random bits.
template <class G>
double uniform01(G& g) noexcept {
  return static_cast<double>(g.next_u64() >> 11) * 0x1.0p-53;
}

/// Uniform on (0, 1].
template <class G>
double uniform_pos(G& g) noexcept {
  return static_cast<double>((g.next_u64() >> 11) + 1) * 0x1.0p-53;
}

/// Exponential with the given rate; +inf when rate <= 0 (one draw either way).
template <class G>
double exponential(G& g, double rate) noexcept {
  const double u = uniform_pos(g);
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return -std::log(u) / rate;
}

/// Uniform integer in [0, n), n >= 1 (Lemire's multiply-shift, no rejection;
/// the bias is below 2^-32 for the small n used here).
template <class G>
std::uint32_t uniform_index(G& g, std::uint32_t n) noexcept {
  const std::uint64_t hi = g.next_u64() >> 32;
  return static_cast<std::uint32_t>((hi * n) >> 32);
}

/// Index drawn from a cumulative table cdf (last entry 1) by inversion.
template <class G>
std::size_t sample_cdf(G& g, std::span<const double> cdf) noexcept {
  const double u = uniform01(g);
  std::size_t k = 0;
  while (k + 1 < cdf.size() && u >= cdf[k]) ++k;
  return k;
}

}  // namespace brwd
