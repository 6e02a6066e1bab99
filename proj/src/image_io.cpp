// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "image_io.hpp"

#include <cctype>
#include <fstream>

#include "error.hpp"

namespace mtnet {

namespace {

struct Header {
  std::string magic;
  int64_t width = 0, height = 0;
  int maxval = 0;
};

int64_t read_number(std::istream& in, const std::string& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) fail(ErrorCode::Io, path + ": malformed netpbm header");
  int64_t v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    ch = in.get();
  }
  // The single whitespace byte after maxval has been consumed here.
  return v;
}

Header read_header(std::istream& in, const std::string& path) {
  Header h;
  h.magic.resize(2);
  in.read(h.magic.data(), 2);
  if (!in) fail(ErrorCode::Io, path + ": cannot read header");
  h.width = read_number(in, path);
  h.height = read_number(in, path);
  h.maxval = static_cast<int>(read_number(in, path));
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
    fail(ErrorCode::Io, path + ": invalid netpbm dimensions or maxval");
  }
  return h;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open image " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write image " + path);
  return out;
}

}  // namespace

RgbImage read_ppm(const std::string& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path);
  if (h.magic != "P6" || h.maxval > 255) fail(ErrorCode::Io, path + ": expected 8-bit binary PPM (P6)");
  RgbImage img;
  img.width = h.width;
  img.height = h.height;
  img.pixels.resize(static_cast<size_t>(h.width * h.height * 3));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) fail(ErrorCode::Io, path + ": truncated pixel data");
  return img;
}

void write_ppm(const std::string& path, const RgbImage& image) {
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

GrayImage read_pgm(const std::string& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path);
  if (h.magic != "P5") fail(ErrorCode::Io, path + ": expected binary PGM (P5)");
  GrayImage img;
  img.width = h.width;
  img.height = h.height;
  img.maxval = h.maxval;
  const size_t n = static_cast<size_t>(h.width * h.height);
  img.pixels.resize(n);
  if (h.maxval <= 255) {
    std::vector<uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    for (size_t i = 0; i < n; ++i) img.pixels[i] = raw[i];
  } else {
    std::vector<uint8_t> raw(2 * n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n));
    for (size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  if (!in) fail(ErrorCode::Io, path + ": truncated pixel data");
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  auto out = open_out(path);
  out << "P5\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
  if (image.maxval <= 255) {
    std::vector<uint8_t> raw(image.pixels.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<uint8_t>(image.pixels[i]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<uint8_t> raw(2 * image.pixels.size());
    for (size_t i = 0; i < image.pixels.size(); ++i) {
      raw[2 * i] = static_cast<uint8_t>(image.pixels[i] >> 8);
      raw[2 * i + 1] = static_cast<uint8_t>(image.pixels[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

}  // namespace mtnet
