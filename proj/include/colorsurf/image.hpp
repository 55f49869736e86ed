#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace colorsurf {

// Float RGB image, values in [0,1], row-major, origin top-left.
struct Image {
  int width = 0, height = 0;
  std::vector<float> pixels;  // 3 * width * height, interleaved RGB

  static Image zeros(int w, int h) {
    return {w, h, std::vector<float>(static_cast<size_t>(w) * h * 3, 0.0f)};
  }
  float* at(int x, int y) { return &pixels[3 * (static_cast<size_t>(y) * width + x)]; }
  const float* at(int x, int y) const {
    return &pixels[3 * (static_cast<size_t>(y) * width + x)];
  }
};

// 8-bit grayscale image; foreground when value > 127 (mask convention).
struct GrayImage {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;

  static GrayImage zeros(int w, int h) {
    return {w, h, std::vector<uint8_t>(static_cast<size_t>(w) * h, 0)};
  }
  uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  bool foreground(int x, int y) const { return at(x, y) > 127; }
};

// Round-half-up quantization used for every float -> byte conversion.
inline uint8_t to_byte(double v) {
  if (v <= 0.0) return 0;
  if (v >= 1.0) return 255;
  return static_cast<uint8_t>(v * 255.0 + 0.5);
}

Image read_png(const std::string& path);
GrayImage read_png_gray(const std::string& path);
// 8-bit output, written atomically (tmp file + rename).
void write_png(const Image& img, const std::string& path);
void write_png_gray(const GrayImage& img, const std::string& path);

}  // namespace colorsurf
