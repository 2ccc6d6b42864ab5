#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lineage/errors.hpp"
#include "lineage/imagecore.hpp"

namespace lineage {

/// Decoded P5 payload; samples are widened to 16 bits regardless of maxval.
struct GrayImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> samples;
};

GrayImage decode_pgm(std::string_view bytes);
std::string encode_pgm(const GrayImage& image);

// 8-bit frames, maxval 255.
Frame frame_from_pgm(std::string_view bytes, int index);
std::string frame_to_pgm(const Frame& frame);

// 16-bit masks, maxval 65535, big-endian samples. Labels above 65535 throw.
LabelMask mask_from_pgm(std::string_view bytes);
std::string mask_to_pgm(const LabelMask& mask);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  RgbImage() = default;
  RgbImage(int width, int height) : width(width), height(height), rgb(static_cast<std::size_t>(width) * height * 3, 0) {}
  void set(int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const std::size_t i = (static_cast<std::size_t>(row) * width + col) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
};

std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// File naming: t%03d.pgm and mask%03d.pgm, 1-based.
std::string frame_filename(int t);
std::string mask_filename(int t);

}  // namespace lineage
