#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "histonorm/error.hpp"
#include "histonorm/image.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

inline constexpr std::size_t kPatchSize = 8;
inline constexpr std::size_t kPatchDim = kPatchSize * kPatchSize * 3;

struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t count() const { return rows * cols; }
};

inline PatchGrid patch_grid(std::size_t width, std::size_t height, std::size_t size, std::size_t stride) {
  if (stride == 0) throw DomainError("patch stride must be positive");
  if (size == 0 || size > width || size > height)
    throw DimensionError("image " + std::to_string(width) + "x" + std::to_string(height) +
                         " smaller than patch size " + std::to_string(size));
  return {(height - size) / stride + 1, (width - size) / stride + 1};
}

// Patches in row-major scan order, each flattened as (y, x, channel) bytes
// and concatenated: count * size * size * 3 bytes.
inline std::vector<std::uint8_t> extract_patch_bytes(const Image& img, std::size_t size, std::size_t stride) {
  const PatchGrid grid = patch_grid(img.width, img.height, size, stride);
  const std::size_t dim = size * size * 3;
  std::vector<std::uint8_t> out(grid.count() * dim);
  std::size_t o = 0;
  for (std::size_t gy = 0; gy < grid.rows; ++gy)
    for (std::size_t gx = 0; gx < grid.cols; ++gx)
      for (std::size_t y = 0; y < size; ++y) {
        const std::size_t row = ((gy * stride + y) * img.width + gx * stride) * 3;
        for (std::size_t i = 0; i < size * 3; ++i) out[o++] = img.pixels[row + i];
      }
  return out;
}

// One vector per patch, as reals in [0, 255].
inline std::vector<std::vector<double>> extract_patches(const Image& img, std::size_t size, std::size_t stride) {
  const auto bytes = extract_patch_bytes(img, size, stride);
  const std::size_t dim = size * size * 3;
  std::vector<std::vector<double>> out(bytes.size() / dim);
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p].assign(bytes.begin() + static_cast<std::ptrdiff_t>(p * dim),
                  bytes.begin() + static_cast<std::ptrdiff_t>((p + 1) * dim));
  return out;
}

inline double scale_to_pm1(double v) { return v / 127.5 - 1.0; }

inline std::vector<double> scale_to_pm1(std::span<const std::uint8_t> patch) {
  std::vector<double> out(patch.size());
  for (std::size_t i = 0; i < patch.size(); ++i) out[i] = scale_to_pm1(static_cast<double>(patch[i]));
  return out;
}

// Rows of a (count x dim) tensor in [-1, 1] from concatenated patch bytes.
inline Tensor patch_bytes_to_pm1(std::span<const std::uint8_t> bytes, std::size_t dim) {
  Tensor t({bytes.size() / dim, dim});
  for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = scale_to_pm1(static_cast<double>(bytes[i]));
  return t;
}

inline constexpr double kGcnGuard = 1e-8;

// Global contrast normalisation: zero mean, unit population std.
inline void gcn_inplace(std::span<double> patch) {
  const double n = static_cast<double>(patch.size());
  double mean = 0.0;
  for (double v : patch) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : patch) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  for (double& v : patch) v = (v - mean) / (sd + kGcnGuard);
}

inline std::vector<double> gcn(std::span<const double> patch) {
  std::vector<double> out(patch.begin(), patch.end());
  gcn_inplace(out);
  return out;
}

}  // namespace histonorm
