// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "layers.hpp"

namespace mtnet {

enum class BlockType { Basic, Bottleneck };
enum class InitMode { Scratch, WeightsFile };

struct BackboneConfig {
  BlockType block = BlockType::Basic;
  std::array<int, 4> stage_blocks{2, 2, 2, 2};
  /// Output channels of each stage (after expansion for bottleneck blocks).
  std::array<int64_t, 4> stage_channels{64, 128, 256, 512};
  int64_t stem_channels = 64;
  int stem_kernel = 7;
  int64_t input_channels = 3;
  InitMode init = InitMode::Scratch;
  std::string weights_path;
  bool freeze_norm_stats = false;

  void validate() const;
};

/// Encoder outputs at strides 4, 8, 16 and 32.
struct StageFeatures {
  Tensor s4, s8, s16, s32;

  const Tensor& at(int stage) const;
};

/// ResNet-style residual encoder. Both task heads read the same instance,
/// so its parameters receive the sum of both heads' gradients.
class Backbone {
 public:
  Backbone(ParameterStore& store, const BackboneConfig& config, Rng& rng,
           const std::string& prefix = "backbone");

  /// `image` is NCHW with H and W divisible by 32.
  StageFeatures encode(const Tensor& image) const;

  const BackboneConfig& config() const { return config_; }

 private:
  struct Block {
    BlockType type;
    Conv2d conv1, conv2, conv3;
    BatchNorm2d bn1, bn2, bn3;
    bool has_shortcut = false;
    Conv2d shortcut;
    BatchNorm2d shortcut_bn;
  };

  Tensor run_block(const Block& b, const Tensor& x) const;

  BackboneConfig config_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  std::array<std::vector<Block>, 4> stages_;
};

/// Loads the `backbone.*` tensors of a weights archive into `store`. Every
/// name and shape is checked before any value is written.
void load_backbone_weights(ParameterStore& store, const std::string& path,
                           const std::string& prefix = "backbone");

}  // namespace mtnet
