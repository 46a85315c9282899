#pragma once

#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>

#include "histonorm/image.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

// Anything that maps an image of a given domain to a (rows x cols x features)
// grid of patch features.
template <class T>
concept FeatureExtractor = requires(const T& e, std::size_t domain, const Image& img, std::size_t stride) {
  { e.feature_map(domain, img, stride) } -> std::same_as<Tensor>;
};

// Order-sensitive digest of parameter bytes, used to prove a model was frozen.
inline std::uint64_t parameter_checksum(std::span<const Tensor* const> params) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const Tensor* t : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
    for (std::size_t i = 0; i < t->size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ull;
    }
  }
  return h;
}

}  // namespace histonorm
