#pragma once

#include <cstdint>

namespace icevae {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed and a counter: derive_seed(master, k) for k = 0, 1, ...
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
  return splitmix64(master ^ splitmix64(counter + 0x632BE59BD9B4E019ULL));
}

}  // namespace icevae
