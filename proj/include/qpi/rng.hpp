#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace qpi {

// Counter-based random numbers. A draw is a pure function of
// (seed, purpose tag, index), so results do not depend on call order
// across modules.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t tag,
                                     std::uint64_t index) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ tag) + index);
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t index) noexcept {
  return static_cast<double>(counter_bits(seed, tag, index) >> 11) * 0x1.0p-53;
}

/// Sequential view over one (seed, tag) stream.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view tag, std::uint64_t offset = 0) noexcept
      : seed_(seed), tag_(hash_tag(tag)), counter_(offset) {}
  RngStream(std::uint64_t seed, std::uint64_t tag_hash) noexcept
      : seed_(seed), tag_(tag_hash) {}

  std::uint64_t next_u64() noexcept { return counter_bits(seed_, tag_, counter_++); }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two counters per draw.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Multiply-shift; the bias is below 2^-64 * n and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t tag_;
  std::uint64_t counter_ = 0;
};

/// Derive a child seed, e.g. one per epoch or per Monte-Carlo pass.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                    std::uint64_t index) noexcept {
  return counter_bits(seed, hash_tag(tag), index);
}

}  // namespace qpi
