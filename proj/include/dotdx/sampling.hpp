#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dotdx {

/// Fisher-Yates permutation of [0, n) driven by mt19937_64. Unlike
/// std::shuffle the draw sequence is fixed, so results match across
/// standard library implementations.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace dotdx
