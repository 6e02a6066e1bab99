// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "layers.hpp"

namespace mtnet {

struct RecogPathConfig {
  int64_t num_classes = 10;
  /// When false the scene head classifies backbone features directly.
  bool semantic_branch = true;
  /// Output channels of the three stride-2 extractor blocks; the last entry
  /// must equal the backbone's stride-32 channel count.
  std::array<int64_t, 3> extractor_channels{128, 256, 512};
  int64_t reduction = 16;
  /// Width of the gated fusion convolutions; 0 means "same as stride-32".
  int64_t fusion_channels = 0;

  void validate(const BackboneConfig& backbone) const;
};

/// Per-pixel argmax of NCHW logits as a one-hot tensor, sampled onto an
/// out_h x out_w grid by nearest neighbour. Ties go to the lowest class index.
/// The result carries no gradient.
Tensor one_hot_encode(const Tensor& logits, int64_t out_h, int64_t out_w);

struct ChannelAttentionOutput {
  Tensor weights;  // [N, C], in (0, 1)
  Tensor output;   // input scaled channel-wise by weights
};

/// Channel gate from average- and max-pooled descriptors through a shared
/// C -> C/r -> C bottleneck followed by a sigmoid.
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(ParameterStore& store, const std::string& name, int64_t channels,
                   int64_t reduction, Rng& rng);

  ChannelAttentionOutput operator()(const Tensor& x) const;

  Linear fc1, fc2;
};

/// Maps the one-hot semantic tensor to a feature map shaped like the
/// backbone's stride-32 output.
class SemanticExtractor {
 public:
  virtual ~SemanticExtractor() = default;
  virtual Tensor operator()(const Tensor& semantic) const = 0;
  virtual std::string name() const = 0;
};

/// Three stride-2 conv/norm/relu blocks, each followed by channel attention.
class ChannelAttentionExtractor final : public SemanticExtractor {
 public:
  ChannelAttentionExtractor(ParameterStore& store, const std::string& prefix,
                            int64_t in_channels, const std::array<int64_t, 3>& channels,
                            int64_t reduction, Rng& rng);

  Tensor operator()(const Tensor& semantic) const override;
  std::string name() const override { return "channel_attention"; }

 private:
  std::array<Conv2d, 3> conv_;
  std::array<BatchNorm2d, 3> bn_;
  std::array<ChannelAttention, 3> attn_;
};

/// Replaces the learned gate for diagnostics and ablations.
struct GateOverride {
  enum class Kind { None, PreActivation, Constant };
  Kind kind = Kind::None;
  double value = 0.0;
};

struct FusionFeatures {
  Tensor f_m;       // semantic representation
  Tensor f_i;       // RGB representation (backbone stride 32)
  Tensor gate_pre;  // pre-sigmoid gate
  Tensor f_ma;      // sigmoid gate, in (0, 1)
  Tensor f_ia;      // transformed RGB representation
  Tensor f_a;       // f_ma (.) f_ia
};

/// Two conv layers per branch; the semantic branch ends in a sigmoid and
/// gates the RGB branch by Hadamard product.
class GatedFusion {
 public:
  GatedFusion() = default;
  GatedFusion(ParameterStore& store, const std::string& prefix, int64_t semantic_channels,
              int64_t rgb_channels, int64_t fusion_channels, Rng& rng);

  FusionFeatures operator()(const Tensor& f_m, const Tensor& f_i,
                            const GateOverride& gate = {}) const;

  Conv2d sem1, sem2, rgb1, rgb2;
};

struct SceneLogits {
  Tensor f;  // [N, K] scores
  Tensor y;  // [N, K] log-posteriors
};

/// Global average pooling, one linear layer and a log-softmax.
class SceneClassifier {
 public:
  SceneClassifier() = default;
  SceneClassifier(ParameterStore& store, const std::string& name, int64_t in_channels,
                  int64_t num_classes, Rng& rng);

  SceneLogits operator()(const Tensor& f_a) const;

  Linear fc;
};

struct CamMap {
  int64_t height = 0, width = 0;
  /// Weighted channel sum at feature resolution, before any scaling.
  std::vector<double> raw;
  int64_t out_height = 0, out_width = 0;
  /// Bilinear upsample of `raw` to the output size, min-max scaled to [0, 1].
  std::vector<double> rendered;
};

/// Class activation map for class `cls` of sample `index` in the batch.
CamMap class_activation_map(const Tensor& f_a, const SceneClassifier& classifier, int64_t cls,
                            int64_t out_h, int64_t out_w, int64_t index = 0);

class RecogPath {
 public:
  RecogPath(ParameterStore& store, const RecogPathConfig& config, const BackboneConfig& backbone,
            int64_t semantic_classes, Rng& rng, const std::string& prefix = "recog");

  struct Output {
    Tensor semantic;  // one-hot input to the extractor
    FusionFeatures fusion;
    SceneLogits scene;
  };

  /// `seg_logits_s4` is the stride-4 segmentation score map.
  Output forward(const Tensor& seg_logits_s4, const Tensor& s32,
                 const GateOverride& gate = {}) const;

  const RecogPathConfig& config() const { return config_; }
  const SceneClassifier& classifier() const { return classifier_; }
  const GatedFusion& fusion() const { return fusion_; }

 private:
  RecogPathConfig config_;
  std::unique_ptr<SemanticExtractor> extractor_;
  GatedFusion fusion_;
  SceneClassifier classifier_;
};

}  // namespace mtnet
