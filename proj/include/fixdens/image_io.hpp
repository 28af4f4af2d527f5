#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fixdens {

/// Simple 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // 3 bytes per pixel

  uint8_t* at(int x, int y) { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
  const uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<size_t>(y) * width + x) * 3];
  }
};

RgbImage solid_image(int width, int height, uint8_t r, uint8_t g, uint8_t b);

/// Binary PPM (P6, maxval 255).
RgbImage read_ppm(const std::string& path);
void write_ppm(const RgbImage& image, const std::string& path);

/// Deterministic PNG encoding (8-bit RGB, zlib level 6, filter 0).
std::vector<uint8_t> encode_png(const RgbImage& image);
void write_png(const RgbImage& image, const std::string& path);

}  // namespace fixdens
