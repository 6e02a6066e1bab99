// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "model.hpp"

#include "trace.hpp"

namespace mtnet {

JointModel::JointModel(const ModelConfig& config)
    : config_(config),
      rng_(config.seed),
      backbone_(store_, config.backbone, rng_),
      seg_(store_, config.seg, config.backbone, rng_),
      recog_(store_, config.recog, config.backbone, config.seg.num_classes, rng_) {
  store_.set_freeze_norm_stats(config.backbone.freeze_norm_stats);
  if (config.backbone.init == InitMode::WeightsFile) {
    load_backbone_weights(store_, config.backbone.weights_path);
  }
}

JointModel::Output JointModel::forward(const Tensor& image, const GateOverride& gate) const {
  Output out;
  out.features = backbone_.encode(image);
  out.seg = seg_.forward(out.features, image.dim(2), image.dim(3));
  out.recog = recog_.forward(out.seg.logits_s4, out.features.s32, gate);
  return out;
}

}  // namespace mtnet
