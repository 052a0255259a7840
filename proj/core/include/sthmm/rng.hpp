#pragma once

#include <cstdint>
#include <random>

namespace sthmm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream-split rule shared by every component that needs independent
/// streams: the child seed is mix64(mix64(master ^ tag) + index).
/// `tag` separates purposes (graph, field, emissions, chain) so that two
/// consumers with the same index never share a stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                    std::uint64_t index) noexcept {
  return mix64(mix64(master ^ (tag * 0xd1342543de82ef95ULL)) + index);
}

namespace stream_tag {
inline constexpr std::uint64_t graph = 1;
inline constexpr std::uint64_t field = 2;
inline constexpr std::uint64_t emission = 3;
inline constexpr std::uint64_t chain = 4;
inline constexpr std::uint64_t init = 5;
}  // namespace stream_tag

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace sthmm
