// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "datasets.hpp"
#include "model.hpp"
#include "training.hpp"

namespace mtnet {

/// Everything a command can be configured with.
struct Settings {
  ModelConfig model;
  TrainConfig train;
  LossWeights loss;
  SyntheticConfig synth;
  /// Scene rules in text form, resolved against synth.shapes on use.
  std::string synth_rules;
};

struct SettingInfo {
  std::string key;
  std::string help;
  /// Part of the architecture hash stored in checkpoints.
  bool architecture;
};

const std::vector<SettingInfo>& setting_keys();

/// Sets one key from its text form. Unknown keys raise a Config error that
/// lists every valid key.
void apply_setting(Settings& s, const std::string& key, const std::string& value);
std::string get_setting(const Settings& s, const std::string& key);

/// Flat "key = value" text; '#' starts a comment.
void apply_settings_text(Settings& s, const std::string& text, const std::string& origin = "<text>");
void apply_settings_file(Settings& s, const std::string& path);
/// Every key with its current value, one per line, in schema order.
std::string format_settings(const Settings& s, bool architecture_only = false);

/// Checks cross-field consistency of the model, training and synthetic parts.
void validate(const Settings& s);

/// Synthetic generator config with rules parsed and defaults filled.
SyntheticConfig resolved_synth(const Settings& s);

/// FNV-1a 64 over the canonical architecture text, as 16 hex digits.
std::string architecture_hash(const Settings& s);
std::string architecture_hash(const ModelConfig& m);

/// Named presets. "toy" is the desk-scale model. The r18/r101 families use
/// 150 segmentation and 1055 scene classes: "-baseline" drops attention and
/// the semantic branch, "-base" drops attention, no suffix (or "-fa") is the
/// full model and "-fa-wide" widens the semantic extractor.
Settings preset(const std::string& name);
std::vector<std::string> preset_names();

/// Adjusts class counts of the model to a dataset manifest.
void match_manifest(Settings& s, const DatasetManifest& manifest);

}  // namespace mtnet
