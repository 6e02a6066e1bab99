// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <string>
#include <vector>

#include "model.hpp"

namespace mtnet {

struct CheckpointInfo {
  int epoch = -1;
  double miou = 0.0;
  double mca = 0.0;
  /// Architecture hash of the settings the model was built from.
  std::string config_hash;
  /// Full settings text; rebuilding from it reproduces the architecture.
  std::string config_text;
  std::vector<std::string> seg_class_names;
  std::vector<std::string> scene_class_names;
};

/// Stores every parameter and buffer of `model` in an archive.
void save_checkpoint(const std::string& path, const JointModel& model, const CheckpointInfo& info);
CheckpointInfo read_checkpoint_info(const std::string& path);
/// Copies archive values into `model` after checking every name and shape.
void load_checkpoint(JointModel& model, const std::string& path);

}  // namespace mtnet
