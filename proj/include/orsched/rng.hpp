#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace orsched {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent, reproducible stream derived from a base seed, a purpose tag and an index.
inline Rng make_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  const std::uint64_t s = splitmix64(seed ^ splitmix64(fnv1a64(tag) + splitmix64(index)));
  return Rng(s);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace orsched
