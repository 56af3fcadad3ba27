#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fsv {

// Stable 64-bit sub-seed for (seed, key); independent of call order, so
// per-speaker or per-file streams can be drawn in any order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view key) {
  return std::mt19937_64(derive_seed(seed, key));
}

}  // namespace fsv
