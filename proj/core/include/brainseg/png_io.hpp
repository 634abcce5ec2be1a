#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace brainseg {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  std::uint8_t* at(std::size_t row, std::size_t col) { return &pixels[(row * width + col) * 3]; }
  const std::uint8_t* at(std::size_t row, std::size_t col) const {
    return &pixels[(row * width + col) * 3];
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Version of the linked libpng.
std::string png_version();

/// Writes a PNG with no time or text chunks, so output bytes depend only on
/// the pixels. Throws Error(UnwritablePath).
void write_png(const std::filesystem::path& path, const RgbImage& image);
/// Decodes an 8-bit RGB PNG. Throws Error(UnreadableContainer).
RgbImage read_png(const std::filesystem::path& path);

}  // namespace brainseg
