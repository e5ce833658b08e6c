#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gsseg {

/// Single-channel image as read from / written to disk.
struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> pixels;
};

/// Reads an 8- or 16-bit single-channel PNG. Throws on multi-channel or palette images.
GrayImage read_png_gray(const std::filesystem::path& path);

/// Writes an 8- or 16-bit single-channel PNG.
void write_png_gray(const GrayImage& image, const std::filesystem::path& path);

/// Writes 8-bit RGB PNG; `rgb` is row-major interleaved.
void write_png_rgb(int width, int height, const std::vector<std::uint8_t>& rgb,
                   const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) of values in [0, 1], clamped.
void write_pgm(int width, int height, const std::vector<double>& values,
               const std::filesystem::path& path);

}  // namespace gsseg
