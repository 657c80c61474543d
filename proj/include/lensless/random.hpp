#pragma once

#include <cstdint>
#include <random>

#include "lensless/tensor.hpp"

namespace lensless {

inline std::mt19937 seeded_rng(std::uint64_t seed) {
  return std::mt19937(static_cast<std::mt19937::result_type>(seed & 0xffffffffu) ^
                      static_cast<std::mt19937::result_type>(seed >> 32));
}

// Stable per-item seed derivation (splitmix64 step), so record k of a dataset
// does not depend on how many records precede it.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <typename T>
void fill_uniform(Tensor<T>& t, std::mt19937& rng, T lo, T hi) {
  std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
  for (T& x : t.v) x = static_cast<T>(d(rng));
}

template <typename T>
void fill_gaussian(Tensor<T>& t, std::mt19937& rng, T mean, T sigma) {
  std::normal_distribution<double> d(static_cast<double>(mean), static_cast<double>(sigma));
  for (T& x : t.v) x = static_cast<T>(d(rng));
}

}  // namespace lensless
