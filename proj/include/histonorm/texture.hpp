#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "histonorm/colour.hpp"
#include "histonorm/image.hpp"
#include "histonorm/rng.hpp"

namespace histonorm {

// Procedural H&E-like textures: an eosin stroma field with lumen holes and
// hematoxylin nuclei, composed in optical density and converted to RGB.
struct TissueStyle {
  double eosin_level = 0.45;
  double eosin_variation = 0.35;
  double lumen_fraction = 0.15;
  double nuclei_per_kpx = 6.0;
  double nucleus_radius = 2.2;
  double elongation = 1.3;
  double hematoxylin_level = 0.9;
  double noise_std = 4.0;  // additive per-channel grain, in 8-bit units
};

// Unit OD stain directions (R, G, B).
inline constexpr std::array<double, 3> kHematoxylinOd = {0.650, 0.704, 0.286};
inline constexpr std::array<double, 3> kEosinOd = {0.072, 0.990, 0.105};

// Value noise in [0, 1] with lattice spacing `cell`, cosine-interpolated.
inline std::vector<double> smooth_field(std::size_t w, std::size_t h, double cell, Rng& rng) {
  const std::size_t gw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / cell)) + 2;
  const std::size_t gh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / cell)) + 2;
  std::vector<double> lattice(gw * gh);
  for (double& v : lattice) v = rng.uniform();
  auto fade = [](double t) { return 0.5 - 0.5 * std::cos(std::numbers::pi * t); };
  std::vector<double> out(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / cell, fy = static_cast<double>(y) / cell;
      const auto ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
      const double tx = fade(fx - static_cast<double>(ix)), ty = fade(fy - static_cast<double>(iy));
      const double a = lattice[iy * gw + ix], b = lattice[iy * gw + ix + 1];
      const double c = lattice[(iy + 1) * gw + ix], d = lattice[(iy + 1) * gw + ix + 1];
      out[y * w + x] = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }
  return out;
}

inline Image render_tissue(std::size_t w, std::size_t h, const TissueStyle& style, Rng& rng) {
  const auto stroma = smooth_field(w, h, 6.0, rng);
  const auto lumen = smooth_field(w, h, 11.0, rng);
  std::vector<double> eosin(w * h), hema(w * h, 0.0);
  for (std::size_t i = 0; i < w * h; ++i) {
    double e = style.eosin_level * (1.0 - style.eosin_variation + 2.0 * style.eosin_variation * stroma[i]);
    if (lumen[i] < style.lumen_fraction) e *= 0.04;
    eosin[i] = std::max(e, 0.0);
    hema[i] = 0.04 * eosin[i] / std::max(style.eosin_level, 1e-9);
  }

  const double expected = style.nuclei_per_kpx * static_cast<double>(w * h) / 1000.0;
  const auto nuclei = static_cast<std::size_t>(std::llround(expected * rng.uniform(0.7, 1.3)));
  for (std::size_t n = 0; n < nuclei; ++n) {
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double rx = style.nucleus_radius * rng.uniform(0.75, 1.25) * style.elongation;
    const double ry = style.nucleus_radius * rng.uniform(0.75, 1.25);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double conc = style.hematoxylin_level * rng.uniform(0.7, 1.1);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double reach = std::max(rx, ry) + 1.0;
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(cx - reach));
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(cy - reach));
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(cx + reach));
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(cy + reach));
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(y0, 0); y < std::min<std::ptrdiff_t>(y1, h); ++y)
      for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(x0, 0); x < std::min<std::ptrdiff_t>(x1, w); ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        const double u = (dx * ca + dy * sa) / rx, v = (-dx * sa + dy * ca) / ry;
        const double q = u * u + v * v;
        if (q >= 1.0) continue;
        const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
        hema[i] = std::max(hema[i], conc * (1.0 - q * q));
        eosin[i] *= 0.6;
      }
  }

  Image img(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double od = hema[i] * kHematoxylinOd[c] + eosin[i] * kEosinOd[c];
      const double v = 256.0 * std::exp(-od) - 1.0 + rng.normal(0.0, style.noise_std);
      img.pixels[3 * i + c] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
  }
  return img;
}

// Three tissue archetypes used for base images and the labeled toy set.
inline const std::vector<std::string>& tissue_class_names() {
  static const std::vector<std::string> names = {"STR", "LYM", "ADI"};
  return names;
}

inline TissueStyle tissue_archetype(std::size_t cls) {
  TissueStyle s;
  switch (cls) {
    case 0:  // stroma: pink, sparse elongated nuclei
      s.eosin_level = 0.6;
      s.lumen_fraction = 0.05;
      s.nuclei_per_kpx = 4.0;
      s.nucleus_radius = 1.8;
      s.elongation = 2.2;
      s.hematoxylin_level = 0.7;
      break;
    case 1:  // lymphocytes: dense small dark round nuclei
      s.eosin_level = 0.3;
      s.lumen_fraction = 0.02;
      s.nuclei_per_kpx = 28.0;
      s.nucleus_radius = 2.0;
      s.elongation = 1.0;
      s.hematoxylin_level = 1.1;
      break;
    default:  // adipose: mostly empty with thin membranes
      s.eosin_level = 0.35;
      s.lumen_fraction = 0.6;
      s.nuclei_per_kpx = 1.0;
      s.nucleus_radius = 1.8;
      s.elongation = 1.6;
      s.hematoxylin_level = 0.6;
      break;
  }
  return s;
}

// Random style: an archetype with its continuous parameters jittered.
inline TissueStyle random_tissue_style(Rng& rng) {
  TissueStyle s = tissue_archetype(rng.index(3));
  s.eosin_level *= rng.uniform(0.8, 1.2);
  s.lumen_fraction *= rng.uniform(0.6, 1.4);
  s.nuclei_per_kpx *= rng.uniform(0.7, 1.3);
  s.hematoxylin_level *= rng.uniform(0.85, 1.1);
  return s;
}

}  // namespace histonorm
