#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "histonorm/error.hpp"

namespace histonorm {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct OdPixel {
  double r = 0.0, g = 0.0, b = 0.0;
};

struct HsdPixel {
  double cx = 0.0;
  double cy = 0.0;
  double density = 0.0;
  bool background = false;
};

// Pixels whose mean optical density falls below this carry no usable chroma.
inline constexpr double kBackgroundDensity = 1e-4;

inline const double kSqrt3 = std::sqrt(3.0);

// od = -ln((v + 1) / 256); zero at v = 255, finite at v = 0.
inline double channel_to_od(std::uint8_t v) { return -std::log((static_cast<double>(v) + 1.0) / 256.0); }

inline OdPixel rgb_to_od(Rgb p) { return {channel_to_od(p.r), channel_to_od(p.g), channel_to_od(p.b)}; }

// Inverse of channel_to_od with rounding and clamping to [0, 255].
inline std::uint8_t od_to_channel(double od) {
  const double v = std::round(256.0 * std::exp(-od) - 1.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

inline Rgb od_to_rgb(const OdPixel& od) { return {od_to_channel(od.r), od_to_channel(od.g), od_to_channel(od.b)}; }

inline HsdPixel hsd_forward(const OdPixel& od) {
  const double sum = od.r + od.g + od.b;
  const double mean = sum / 3.0;
  if (mean < kBackgroundDensity) return {0.0, 0.0, mean, true};
  // Difference form of r / mean - 1, exact zero on grey pixels.
  return {(2.0 * od.r - od.g - od.b) / sum, (od.g - od.b) / (kSqrt3 * mean), mean, false};
}

// Channel ODs before any gamut check; negative entries mean out of gamut.
inline OdPixel hsd_inverse_unchecked(const HsdPixel& hsd) {
  const double d = hsd.density;
  const double red = d * (hsd.cx + 1.0);
  const double green = (3.0 * d - red + kSqrt3 * hsd.cy * d) / 2.0;
  const double blue = (3.0 * d - red - kSqrt3 * hsd.cy * d) / 2.0;
  return {red, green, blue};
}

inline bool in_gamut(const OdPixel& od) { return od.r >= 0.0 && od.g >= 0.0 && od.b >= 0.0; }

inline OdPixel hsd_inverse(const HsdPixel& hsd) {
  if (hsd.density < 0.0) throw GamutError("hsd_inverse: negative density");
  const OdPixel od = hsd_inverse_unchecked(hsd);
  if (!in_gamut(od))
    throw GamutError("hsd_inverse: chromatic coordinates (" + std::to_string(hsd.cx) + ", " +
                     std::to_string(hsd.cy) + ") fall outside the optical-density gamut");
  return od;
}

// Clamps negative channel ODs to zero; returns whether any clamping happened.
inline bool clamp_to_gamut(OdPixel& od) {
  const bool clamped = !in_gamut(od);
  od.r = std::max(od.r, 0.0);
  od.g = std::max(od.g, 0.0);
  od.b = std::max(od.b, 0.0);
  return clamped;
}

}  // namespace histonorm
