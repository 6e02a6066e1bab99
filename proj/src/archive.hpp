// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace mtnet {

struct ArchiveEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Flat container of named float64 tensors plus a JSON metadata object.
///
/// Layout: the 8-byte magic "MTNETAR1", a little-endian uint64 header
/// length, a UTF-8 JSON header
///   {"metadata": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
/// and then the payload of little-endian IEEE-754 doubles. `offset` counts
/// elements from the start of the payload. The manifest is checked against
/// the payload size before any value is read.
class Archive {
 public:
  static Archive read(const std::string& path);
  void write(const std::string& path) const;

  const ArchiveEntry* find(const std::string& name) const;
  void add(std::string name, const Tensor& t);

  std::vector<ArchiveEntry> entries;
  nlohmann::json metadata = nlohmann::json::object();
};

}  // namespace mtnet
