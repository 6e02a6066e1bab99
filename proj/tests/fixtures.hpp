// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include "datasets.hpp"
#include "model.hpp"

namespace mtnet::testing {

/// Smallest useful joint model; cheap enough to finite-difference end to end.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.backbone.stage_blocks = {1, 1, 1, 1};
  c.backbone.stage_channels = {2, 3, 3, 4};
  c.backbone.stem_channels = 2;
  c.backbone.stem_kernel = 3;
  c.seg.num_classes = 3;
  c.seg.decoder_channels = 3;
  c.seg.attn_channels = 2;
  c.seg.spp_grids = {1};
  c.recog.num_classes = 3;
  c.recog.extractor_channels = {2, 3, 4};
  c.recog.reduction = 2;
  c.seed = 7;
  return c;
}

/// Small synthetic split matching `micro_task_config`.
inline std::vector<Sample> micro_samples(int64_t count, int split = 0, uint64_t seed = 5) {
  SyntheticConfig sc;
  sc.size = 32;
  sc.train_count = count;
  sc.val_count = count;
  sc.seed = seed;
  sc.finalize();
  std::vector<Sample> out;
  for (auto& s : generate_split(sc, split)) out.push_back(std::move(s.sample));
  return out;
}

/// Micro model sized for the default synthetic label sets.
inline ModelConfig micro_task_config() {
  ModelConfig c = micro_config();
  c.seg.num_classes = 5;
  c.recog.num_classes = 6;
  return c;
}

}  // namespace mtnet::testing
