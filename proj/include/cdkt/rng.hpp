#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cdkt {

using Engine = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Every random consumer (init, sampling, generation, ...) gets its own named
// stream derived from the single user seed, so components stay reproducible
// in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                    std::uint64_t index = 0) noexcept {
  return detail::splitmix64(detail::splitmix64(seed ^ detail::fnv1a(stream)) + index);
}

inline Engine make_engine(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
  return Engine{derive_seed(seed, stream, index)};
}

// Counter-based uniform on [0, 1): the value depends only on (key, counter),
// which lets independent runs share coin flips.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  const std::uint64_t bits = detail::splitmix64(key ^ detail::splitmix64(counter));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace cdkt
