#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "histonorm/error.hpp"

namespace histonorm {

// Single-channel image as a row-major plane of doubles.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

struct SsimConfig {
  std::size_t window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  // Dynamic range; <= 0 means "max observed value over the pair".
  double dynamic_range = 0.0;
};

namespace detail {

inline double window_ssim(const Plane& a, const Plane& b, std::size_t x0, std::size_t y0,
                          std::size_t win, double c1, double c2) {
  const double n = static_cast<double>(win * win);
  double ma = 0.0, mb = 0.0;
  for (std::size_t y = y0; y < y0 + win; ++y)
    for (std::size_t x = x0; x < x0 + win; ++x) {
      ma += a.at(x, y);
      mb += b.at(x, y);
    }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t y = y0; y < y0 + win; ++y)
    for (std::size_t x = x0; x < x0 + win; ++x) {
      const double da = a.at(x, y) - ma;
      const double db = b.at(x, y) - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  va /= n;
  vb /= n;
  cov /= n;
  // Canonical operand order keeps the result bit-symmetric under FMA contraction.
  if (ma < mb || (ma == mb && va < vb)) {
    std::swap(ma, mb);
    std::swap(va, vb);
  }
  return ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace detail

// Mean of local SSIM over all stride-1 uniform windows. Windows larger than
// the image shrink to the image's smaller side.
inline double ssim(const Plane& a, const Plane& b, const SsimConfig& config = {}) {
  if (a.width != b.width || a.height != b.height)
    throw DimensionError("ssim: image dimensions differ");
  if (a.width == 0 || a.height == 0) throw DimensionError("ssim: empty image");
  double range = config.dynamic_range;
  if (range <= 0.0) {
    for (double v : a.values) range = std::max(range, v);
    for (double v : b.values) range = std::max(range, v);
  }
  // All-zero pair: identical by construction.
  if (range <= 0.0) return 1.0;
  const std::size_t win = std::min({config.window, a.width, a.height});
  const double c1 = (config.k1 * range) * (config.k1 * range);
  const double c2 = (config.k2 * range) * (config.k2 * range);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + win <= a.height; ++y)
    for (std::size_t x = 0; x + win <= a.width; ++x) {
      total += detail::window_ssim(a, b, x, y, win, c1, c2);
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace histonorm
