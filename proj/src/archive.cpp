// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "error.hpp"

namespace mtnet {

namespace {
constexpr char kMagic[8] = {'M', 'T', 'N', 'E', 'T', 'A', 'R', '1'};
static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");
}  // namespace

Archive Archive::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open archive " + path);
  char magic[8];
  uint64_t header_len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    fail(ErrorCode::Checkpoint, path + ": not an mtnet archive");
  }
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<uint64_t>(in.tellg());
  if (header_len > file_size - 16) fail(ErrorCode::Checkpoint, path + ": truncated header");
  in.seekg(16);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));

  Archive a;
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const std::exception& e) {
    fail(ErrorCode::Checkpoint, path + ": malformed manifest: " + e.what());
  }
  const uint64_t payload_elems = (file_size - 16 - header_len) / sizeof(double);
  a.metadata = h.value("metadata", nlohmann::json::object());
  for (const auto& t : h.at("tensors")) {
    ArchiveEntry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<uint64_t>();
    const auto count = static_cast<uint64_t>(shape_numel(e.shape));
    if (offset + count > payload_elems) {
      fail(ErrorCode::Checkpoint, path + ": tensor " + e.name + " extends past end of payload");
    }
    e.values.resize(count);
    in.seekg(static_cast<std::streamoff>(16 + header_len + offset * sizeof(double)));
    in.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) fail(ErrorCode::Io, path + ": read error in tensor " + e.name);
    a.entries.push_back(std::move(e));
  }
  return a;
}

void Archive::write(const std::string& path) const {
  nlohmann::json h;
  h["metadata"] = metadata;
  h["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& e : entries) {
    h["tensors"].push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
    offset += e.values.size();
  }
  const std::string header = h.dump();
  const uint64_t header_len = header.size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write archive " + path);
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& e : entries) {
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(double)));
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

const ArchiveEntry* Archive::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void Archive::add(std::string name, const Tensor& t) {
  entries.push_back({std::move(name), t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
}

}  // namespace mtnet
