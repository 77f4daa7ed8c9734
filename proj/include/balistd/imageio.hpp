#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "balistd/common.hpp"

namespace balistd {

struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, height*width bytes
};

// 8-bit single-channel PNG. Reading rejects anything that is not 8-bit
// grayscale; writing is deterministic (fixed settings, no ancillary chunks).
Gray8 read_png_gray8(const std::string& path);
void write_png_gray8(const std::string& path, const Gray8& img);

// Encode/decode through libjpeg at the given quality, in memory.
Gray8 jpeg_roundtrip_gray8(const Gray8& img, int quality);

template <typename T>
Gray8 quantize_to_gray8(const Plane<T>& img) {
  Gray8 out;
  out.height = static_cast<int>(img.rows());
  out.width = static_cast<int>(img.cols());
  out.pixels.resize(static_cast<std::size_t>(out.height) * out.width);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) {
      double v = std::round(static_cast<double>(img(r, c)) * 255.0);
      v = v < 0 ? 0 : (v > 255 ? 255 : v);
      out.pixels[static_cast<std::size_t>(r) * out.width + c] = static_cast<std::uint8_t>(v);
    }
  return out;
}

template <typename T>
Plane<T> to_unit_plane(const Gray8& img) {
  Plane<T> out(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      out(r, c) = static_cast<T>(img.pixels[static_cast<std::size_t>(r) * img.width + c]) / T(255);
  return out;
}

}  // namespace balistd
