// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "profiler.hpp"
#include "training.hpp"

// Command-level operations shared by the C API and the tests.
namespace mtnet {

struct LoadedModel {
  Settings settings;
  CheckpointInfo info;
  std::unique_ptr<JointModel> model;
};

/// Freshly initialized model.
LoadedModel create_model(const Settings& settings);
/// Rebuilds the architecture stored in a checkpoint and loads its values.
/// With `expected`, a differing architecture is refused with the keys that
/// differ.
LoadedModel load_model(const std::string& checkpoint, const Settings* expected = nullptr);

struct TrainSummary {
  TrainingLog log;
  int best_epoch = 0;
  std::string out_dir;

  nlohmann::json to_json() const;
};

/// Trains on folder datasets; class counts come from the training manifest.
TrainSummary train_folder(const Settings& settings, const std::string& train_dir,
                          const std::string& val_dir, const std::string& out_dir,
                          const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Ignore index for a dataset: the manifest's if it declares one.
int32_t effective_ignore_index(const Settings& settings, const DatasetManifest& manifest);

EvalResult evaluate_folder(const LoadedModel& model, const std::string& data_dir);
/// Scores stored predictions against a folder dataset.
EvalResult evaluate_predictions(const std::string& data_dir, const std::string& pred_dir,
                                int32_t ignore_index = -1);

/// Complexity reports followed by a comparison table.
std::string profile_report(const std::vector<std::pair<std::string, Settings>>& configs,
                           int64_t height, int64_t width, int fps_iters);

}  // namespace mtnet
