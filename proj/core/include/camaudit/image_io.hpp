#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "camaudit/tensor.hpp"

namespace camaudit {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // rows × cols × 3

  RgbImage() = default;
  RgbImage(std::size_t rows, std::size_t cols) : rows(rows), cols(cols), pixels(rows * cols * 3, 0) {}

  std::uint8_t* at(std::size_t i, std::size_t j) { return &pixels[(i * cols + j) * 3]; }
  const std::uint8_t* at(std::size_t i, std::size_t j) const { return &pixels[(i * cols + j) * 3]; }
  bool operator==(const RgbImage&) const = default;
};

/// round(clamp(v, 0, 1) · 255)
std::uint8_t quantize(double v);

/// Binary PGM (P5, maxval 255) of a 1×H×W or H×W tensor.
std::string encode_pgm(const Tensor& image);
/// Decodes P5 to a 1×H×W tensor with values byte/255.
Tensor decode_pgm(std::string_view bytes);

std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::string_view bytes);

void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace camaudit
