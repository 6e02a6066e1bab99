// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "checkpoint.hpp"

#include <algorithm>

#include "archive.hpp"
#include "error.hpp"

namespace mtnet {

namespace {

CheckpointInfo info_from_json(const nlohmann::json& m, const std::string& path) {
  CheckpointInfo info;
  try {
    info.epoch = m.at("epoch").get<int>();
    info.miou = m.at("miou").get<double>();
    info.mca = m.at("mca").get<double>();
    info.config_hash = m.at("config_hash").get<std::string>();
    info.config_text = m.at("config").get<std::string>();
    info.seg_class_names = m.value("seg_class_names", std::vector<std::string>{});
    info.scene_class_names = m.value("scene_class_names", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Checkpoint, path + ": incomplete checkpoint metadata: " + e.what());
  }
  return info;
}

}  // namespace

void save_checkpoint(const std::string& path, const JointModel& model, const CheckpointInfo& info) {
  Archive a;
  a.metadata = {{"kind", "checkpoint"},
                {"epoch", info.epoch},
                {"miou", info.miou},
                {"mca", info.mca},
                {"config_hash", info.config_hash},
                {"config", info.config_text},
                {"seg_class_names", info.seg_class_names},
                {"scene_class_names", info.scene_class_names}};
  for (const auto& nt : model.store().all()) a.add(nt.name, nt.tensor);
  a.write(path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  return info_from_json(Archive::read(path).metadata, path);
}

void load_checkpoint(JointModel& model, const std::string& path) {
  const Archive a = Archive::read(path);
  auto targets = model.store().all();
  for (const auto& nt : targets) {
    const ArchiveEntry* e = a.find(nt.name);
    if (!e) fail(ErrorCode::Checkpoint, path + ": missing tensor " + nt.name);
    if (e->shape != nt.tensor.shape()) {
      fail(ErrorCode::Checkpoint, path + ": shape mismatch for " + nt.name + ": file has " +
                                      shape_str(e->shape) + ", model expects " +
                                      shape_str(nt.tensor.shape()));
    }
  }
  for (auto& nt : targets) {
    const ArchiveEntry* e = a.find(nt.name);
    std::copy(e->values.begin(), e->values.end(), nt.tensor.data().begin());
  }
}

}  // namespace mtnet
