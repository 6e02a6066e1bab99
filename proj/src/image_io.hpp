// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Binary netpbm I/O: P6 (RGB, 8-bit) and P5 (gray, 8- or 16-bit big-endian).
namespace mtnet {

struct RgbImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;  // interleaved RGB, row-major
};

struct GrayImage {
  int64_t width = 0;
  int64_t height = 0;
  int maxval = 255;
  std::vector<uint16_t> pixels;
};

RgbImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const RgbImage& image);
GrayImage read_pgm(const std::string& path);
/// maxval <= 255 writes one byte per sample, otherwise two.
void write_pgm(const std::string& path, const GrayImage& image);

}  // namespace mtnet
