#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "histonorm/colour.hpp"
#include "histonorm/error.hpp"
#include "histonorm/ssim.hpp"

namespace histonorm {

// 8-bit interleaved RGB, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}
  Image(std::size_t w, std::size_t h, std::vector<std::uint8_t> px) : width(w), height(h), pixels(std::move(px)) {
    if (pixels.size() != w * h * 3)
      throw DimensionError("image buffer holds " + std::to_string(pixels.size()) + " bytes, expected " +
                           std::to_string(w * h * 3));
  }

  Rgb at(std::size_t x, std::size_t y) const {
    const std::size_t i = (y * width + x) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  void set(std::size_t x, std::size_t y, Rgb p) {
    const std::size_t i = (y * width + x) * 3;
    pixels[i] = p.r;
    pixels[i + 1] = p.g;
    pixels[i + 2] = p.b;
  }
  std::size_t pixel_count() const { return width * height; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Mean-optical-density plane of an image.
inline Plane density_plane(const Image& img) {
  Plane p{img.width, img.height, std::vector<double>(img.pixel_count())};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const OdPixel od = rgb_to_od({img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]});
    p.values[i] = (od.r + od.g + od.b) / 3.0;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Binary PPM (P6, maxval 255). Header written as "P6\n<w> <h>\n255\n".

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError("ppm: " + msg + " at byte offset " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail("expected unsigned integer");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 24)) fail("header value too large");
      ++pos;
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("missing P6 magic");
  pos = 2;
  const std::size_t w = read_uint();
  const std::size_t h = read_uint();
  const std::size_t maxval = read_uint();
  if (maxval != 255) fail("unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("expected whitespace after maxval");
  ++pos;
  const std::size_t expected = w * h * 3;
  const std::size_t actual = bytes.size() - pos;
  if (actual < expected)
    fail("truncated payload: expected " + std::to_string(expected) + " bytes, got " + std::to_string(actual));
  if (actual > expected)
    fail("trailing data: expected " + std::to_string(expected) + " bytes, got " + std::to_string(actual));
  return Image(w, h, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Image load_image(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void save_image(const std::filesystem::path& path, const Image& img) {
  write_file_bytes(path, encode_ppm(img));
}

}  // namespace histonorm
