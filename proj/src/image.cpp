#include "colorsurf/image.hpp"

#include <png.h>

#include <cstdio>
#include <stdexcept>

namespace colorsurf {

namespace {

std::vector<uint8_t> read_bytes(const std::string& path, uint32_t format, int channels,
                                int* width, int* height) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str()))
    throw std::runtime_error("failed to open png: " + path + ": " + im.message);
  im.format = format;
  std::vector<uint8_t> buf(static_cast<size_t>(im.width) * im.height * channels);
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = im.message;
    png_image_free(&im);
    throw std::runtime_error("failed to decode png: " + path + ": " + msg);
  }
  *width = static_cast<int>(im.width);
  *height = static_cast<int>(im.height);
  return buf;
}

void write_bytes(const std::string& path, uint32_t format, int channels, int width,
                 int height, const uint8_t* data) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(width);
  im.height = static_cast<png_uint_32>(height);
  im.format = format;
  const std::string tmp = path + ".tmp";
  if (!png_image_write_to_file(&im, tmp.c_str(), 0, data,
                               static_cast<png_int_32>(width * channels), nullptr))
    throw std::runtime_error("failed to write png: " + path + ": " + im.message);
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("failed to move png into place: " + path);
}

}  // namespace

Image read_png(const std::string& path) {
  Image img;
  std::vector<uint8_t> buf = read_bytes(path, PNG_FORMAT_RGB, 3, &img.width, &img.height);
  img.pixels.resize(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0f;
  return img;
}

GrayImage read_png_gray(const std::string& path) {
  GrayImage img;
  img.pixels = read_bytes(path, PNG_FORMAT_GRAY, 1, &img.width, &img.height);
  return img;
}

void write_png(const Image& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("empty image: " + path);
  std::vector<uint8_t> buf(img.pixels.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.pixels[i]);
  write_bytes(path, PNG_FORMAT_RGB, 3, img.width, img.height, buf.data());
}

void write_png_gray(const GrayImage& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("empty image: " + path);
  write_bytes(path, PNG_FORMAT_GRAY, 1, img.width, img.height, img.pixels.data());
}

}  // namespace colorsurf
