#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace facereg {

/// Single-channel raster as stored in a binary PGM (P5).
template <class T>
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<T> pixels;  ///< row-major, width * height
};

/// 16-bit PGM (maxval 65535, big-endian samples as the format requires).
GrayImage<std::uint16_t> read_pgm16(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const GrayImage<std::uint16_t>& img);

/// 8-bit PGM (maxval 255).
GrayImage<std::uint8_t> read_pgm8(const std::filesystem::path& path);
void write_pgm8(const std::filesystem::path& path, const GrayImage<std::uint8_t>& img);

}  // namespace facereg
