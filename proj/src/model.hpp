// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>

#include "backbone.hpp"
#include "recog_path.hpp"
#include "seg_path.hpp"

namespace mtnet {

struct ModelConfig {
  BackboneConfig backbone;
  SegPathConfig seg;
  RecogPathConfig recog;
  uint64_t seed = 0;
};

/// Shared encoder with a segmentation decoder and a scene head that reads
/// the decoder's one-hot argmax map.
class JointModel {
 public:
  explicit JointModel(const ModelConfig& config);

  struct Output {
    StageFeatures features;
    SegOutput seg;
    RecogPath::Output recog;
  };

  Output forward(const Tensor& image, const GateOverride& gate = {}) const;

  void set_training(bool on) { store_.set_training(on); }
  bool training() const { return store_.training(); }

  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const Backbone& backbone() const { return backbone_; }
  const SegPath& seg() const { return seg_; }
  const RecogPath& recog() const { return recog_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  ParameterStore store_;
  Rng rng_;
  Backbone backbone_;
  SegPath seg_;
  RecogPath recog_;
};

}  // namespace mtnet
