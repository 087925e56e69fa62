#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace orient {

/// 8-bit RGB raster, row-major, three bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
  std::array<std::uint8_t, 3> pixel(int x, int y) const {
    const auto o = offset(x, y);
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }
  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    const auto o = offset(x, y);
    rgb[o] = c[0];
    rgb[o + 1] = c[1];
    rgb[o + 2] = c[2];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

std::string encode_png(const Image& image);
/// 1-bit grayscale PNG; nonzero mask entries become white.
std::string encode_mask_png(int width, int height, const std::vector<std::uint8_t>& mask);
/// Any PNG flavour libpng understands, converted to 8-bit RGB.
Image decode_png(std::string_view bytes);

std::string base64_encode(std::string_view bytes);

}  // namespace orient
