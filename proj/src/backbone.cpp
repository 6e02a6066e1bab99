// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "backbone.hpp"

#include "archive.hpp"
#include "error.hpp"
#include "ops.hpp"
#include "trace.hpp"

namespace mtnet {

void BackboneConfig::validate() const {
  for (int i = 0; i < 4; ++i) {
    if (stage_blocks[i] < 1) fail(ErrorCode::Config, "backbone.stage_blocks entries must be positive");
    if (stage_channels[i] < 1) {
      fail(ErrorCode::Config, "backbone.stage_channels entries must be positive");
    }
    if (block == BlockType::Bottleneck && stage_channels[i] % 4 != 0) {
      fail(ErrorCode::Config, "bottleneck stage_channels must be divisible by 4");
    }
  }
  if (stem_channels < 1 || input_channels < 1) {
    fail(ErrorCode::Config, "backbone.stem_channels and backbone.input_channels must be positive");
  }
  if (stem_kernel < 1 || stem_kernel % 2 == 0) {
    fail(ErrorCode::Config, "backbone.stem_kernel must be a positive odd number");
  }
  if (init == InitMode::WeightsFile && weights_path.empty()) {
    fail(ErrorCode::Config, "backbone.init = file requires backbone.weights");
  }
}

const Tensor& StageFeatures::at(int stage) const {
  switch (stage) {
    case 0: return s4;
    case 1: return s8;
    case 2: return s16;
    case 3: return s32;
    default: fail(ErrorCode::InvalidArgument, "stage index out of range");
  }
}

Backbone::Backbone(ParameterStore& store, const BackboneConfig& config, Rng& rng,
                   const std::string& prefix)
    : config_(config) {
  config_.validate();
  const int stem_pad = config.stem_kernel / 2;
  stem_ = Conv2d(store, prefix + ".stem.conv", config.input_channels, config.stem_channels,
                 config.stem_kernel, 2, stem_pad, false, rng);
  stem_bn_ = BatchNorm2d(store, prefix + ".stem.bn", config.stem_channels);

  int64_t in = config.stem_channels;
  for (int s = 0; s < 4; ++s) {
    const int64_t out = config.stage_channels[s];
    for (int b = 0; b < config.stage_blocks[s]; ++b) {
      const std::string name = prefix + ".stage" + std::to_string(s + 1) + "." + std::to_string(b);
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      Block blk;
      blk.type = config.block;
      if (config.block == BlockType::Basic) {
        blk.conv1 = Conv2d(store, name + ".conv1", in, out, 3, stride, 1, false, rng);
        blk.bn1 = BatchNorm2d(store, name + ".bn1", out);
        blk.conv2 = Conv2d(store, name + ".conv2", out, out, 3, 1, 1, false, rng);
        blk.bn2 = BatchNorm2d(store, name + ".bn2", out);
      } else {
        const int64_t mid = out / 4;
        blk.conv1 = Conv2d(store, name + ".conv1", in, mid, 1, 1, 0, false, rng);
        blk.bn1 = BatchNorm2d(store, name + ".bn1", mid);
        blk.conv2 = Conv2d(store, name + ".conv2", mid, mid, 3, stride, 1, false, rng);
        blk.bn2 = BatchNorm2d(store, name + ".bn2", mid);
        blk.conv3 = Conv2d(store, name + ".conv3", mid, out, 1, 1, 0, false, rng);
        blk.bn3 = BatchNorm2d(store, name + ".bn3", out);
      }
      if (stride != 1 || in != out) {
        blk.has_shortcut = true;
        blk.shortcut = Conv2d(store, name + ".shortcut", in, out, 1, stride, 0, false, rng);
        blk.shortcut_bn = BatchNorm2d(store, name + ".shortcut_bn", out);
      }
      stages_[s].push_back(std::move(blk));
      in = out;
    }
  }
  store.set_freeze_norm_stats(config.freeze_norm_stats);
  if (config.init == InitMode::WeightsFile) load_backbone_weights(store, config.weights_path, prefix);
}

Tensor Backbone::run_block(const Block& b, const Tensor& x) const {
  Tensor y = ops::relu(b.bn1(b.conv1(x)));
  if (b.type == BlockType::Basic) {
    y = b.bn2(b.conv2(y));
  } else {
    y = ops::relu(b.bn2(b.conv2(y)));
    y = b.bn3(b.conv3(y));
  }
  const Tensor skip = b.has_shortcut ? b.shortcut_bn(b.shortcut(x)) : x;
  return ops::relu(ops::add(y, skip));
}

StageFeatures Backbone::encode(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != config_.input_channels) {
    fail(ErrorCode::Shape, "encode: expected [N, " + std::to_string(config_.input_channels) +
                               ", H, W] input, got " + shape_str(image.shape()));
  }
  if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0 || image.dim(2) == 0 || image.dim(3) == 0) {
    fail(ErrorCode::Shape, "encode: input height and width must be divisible by 32, got " +
                               shape_str(image.shape()));
  }
  trace::Scope scope("backbone");
  Tensor x = ops::relu(stem_bn_(stem_(image)));
  x = ops::max_pool2d(x, 3, 2, 1);
  StageFeatures f;
  for (int s = 0; s < 4; ++s) {
    for (const auto& blk : stages_[s]) x = run_block(blk, x);
    switch (s) {
      case 0: f.s4 = x; break;
      case 1: f.s8 = x; break;
      case 2: f.s16 = x; break;
      default: f.s32 = x; break;
    }
  }
  return f;
}

void load_backbone_weights(ParameterStore& store, const std::string& path,
                           const std::string& prefix) {
  const Archive archive = Archive::read(path);
  std::vector<NamedTensor> targets;
  for (const auto& nt : store.all()) {
    if (nt.name.rfind(prefix + ".", 0) == 0) targets.push_back(nt);
  }
  for (const auto& nt : targets) {
    const ArchiveEntry* e = archive.find(nt.name);
    if (!e) fail(ErrorCode::Checkpoint, path + ": missing tensor " + nt.name);
    if (e->shape != nt.tensor.shape()) {
      fail(ErrorCode::Checkpoint, path + ": shape mismatch for " + nt.name + ": file has " +
                                      shape_str(e->shape) + ", model expects " +
                                      shape_str(nt.tensor.shape()));
    }
  }
  for (auto& nt : targets) {
    const ArchiveEntry* e = archive.find(nt.name);
    std::copy(e->values.begin(), e->values.end(), nt.tensor.data().begin());
  }
}

}  // namespace mtnet
