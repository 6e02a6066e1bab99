// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "backbone.hpp"
#include "layers.hpp"

namespace mtnet {

struct SegPathConfig {
  int64_t num_classes = 150;
  int64_t decoder_channels = 128;
  /// Width of the query/key projections.
  int64_t attn_channels = 32;
  std::vector<int64_t> spp_grids{1, 2, 4};
  /// Fast attention on the stride-16, stride-8 and stride-4 lateral links.
  std::array<bool, 3> attention_levels{true, true, true};

  void validate() const;
};

/// Rows (last dimension) scaled to unit L2 norm; zero rows stay zero.
Tensor l2_normalize_rows(const Tensor& x);

/// Linear-cost cosine attention: Y = (1/n) * Qn * (Kn^T * V), where Qn and Kn
/// are the row-normalized queries and keys and n is the number of positions.
/// Operands are [n, c] or batched [B, n, c]. The key/value product is formed
/// first, so cost grows linearly in n and quadratically in channels.
Tensor fast_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Same quantity evaluated affinity-first, (1/n) * (Qn * Kn^T) * V, which
/// materializes the n x n cosine affinity. Reference only.
Tensor fast_attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v);

/// Simplified spatial pyramid pooling over the deepest encoder stage.
class Spp {
 public:
  Spp() = default;
  Spp(ParameterStore& store, const std::string& name, int64_t in_channels,
      int64_t out_channels, std::vector<int64_t> grids, Rng& rng);

  Tensor operator()(const Tensor& x) const;

 private:
  std::vector<int64_t> grids_;
  std::vector<Conv2d> branch_;
  Conv2d fuse_;
  BatchNorm2d fuse_bn_;
};

/// Lateral connection from an encoder stage into the decoder level above it.
/// The skip feature is projected to decoder width and, when attention is
/// enabled, refined by fast attention over its own positions; the result is
/// added to the 2x bilinear upsample of the decoder feature.
class LateralFuse {
 public:
  LateralFuse() = default;
  LateralFuse(ParameterStore& store, const std::string& name, int64_t skip_channels,
              int64_t decoder_channels, int64_t attn_channels, bool attention, Rng& rng);

  Tensor operator()(const Tensor& decoder_feat, const Tensor& skip_feat) const;

  bool attention() const { return attention_; }
  Conv2d proj;
  Conv2d query, key, value;

 private:
  bool attention_ = true;
};

struct SegOutput {
  /// Class scores at the stride-4 decoder level.
  Tensor logits_s4;
  /// Class scores at input resolution.
  Tensor logits;
};

class SegPath {
 public:
  SegPath(ParameterStore& store, const SegPathConfig& config, const BackboneConfig& backbone,
          Rng& rng, const std::string& prefix = "seg");

  SegOutput forward(const StageFeatures& features, int64_t out_h, int64_t out_w) const;

  const SegPathConfig& config() const { return config_; }
  const LateralFuse& lateral(int level) const { return laterals_[level]; }

 private:
  SegPathConfig config_;
  Spp spp_;
  std::array<LateralFuse, 3> laterals_;
  std::array<Conv2d, 3> blend_;
  std::array<BatchNorm2d, 3> blend_bn_;
  Conv2d classifier_;
};

/// Encodes `image` and decodes full-resolution segmentation logits.
SegOutput segment(const Backbone& backbone, const SegPath& seg, const Tensor& image);

/// Feature map [N, C, H, W] to position-major rows [N, H*W, C] and back.
Tensor to_positions(const Tensor& fmap);
Tensor from_positions(const Tensor& rows, int64_t h, int64_t w);

}  // namespace mtnet
