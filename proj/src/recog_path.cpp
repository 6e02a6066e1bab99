// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "recog_path.hpp"

#include <algorithm>

#include "error.hpp"
#include "ops.hpp"
#include "trace.hpp"

namespace mtnet {

void RecogPathConfig::validate(const BackboneConfig& backbone) const {
  if (num_classes < 1) fail(ErrorCode::Config, "recog.num_classes must be positive");
  if (reduction < 1) fail(ErrorCode::Config, "recog.reduction must be positive");
  if (fusion_channels < 0) fail(ErrorCode::Config, "recog.fusion_channels must be >= 0");
  if (!semantic_branch) return;
  for (auto c : extractor_channels) {
    if (c < reduction) {
      fail(ErrorCode::Config, "recog.extractor_channels entry " + std::to_string(c) +
                                  " is smaller than recog.reduction " + std::to_string(reduction));
    }
  }
  if (extractor_channels[2] != backbone.stage_channels[3]) {
    fail(ErrorCode::Config, "recog.extractor_channels must end with the stride-32 width " +
                                std::to_string(backbone.stage_channels[3]));
  }
}

Tensor one_hot_encode(const Tensor& logits, int64_t out_h, int64_t out_w) {
  if (logits.rank() != 4) fail(ErrorCode::Shape, "one_hot_encode: expected NCHW logits");
  const int64_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    fail(ErrorCode::Shape, "one_hot_encode: cannot sample " + std::to_string(out_h) + "x" +
                               std::to_string(out_w) + " from " + shape_str(logits.shape()));
  }
  Tensor out({n, k, out_h, out_w}, 0.0);
  if (trace::dry_run()) return out;
  const auto v = logits.data();
  auto o = out.data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t y = 0; y < out_h; ++y) {
      const int64_t sy = std::min(h - 1, ((2 * y + 1) * h) / (2 * out_h));
      for (int64_t x = 0; x < out_w; ++x) {
        const int64_t sx = std::min(w - 1, ((2 * x + 1) * w) / (2 * out_w));
        const double* px = v.data() + b * k * h * w + sy * w + sx;
        int64_t best = 0;
        for (int64_t c = 1; c < k; ++c) {
          if (px[c * h * w] > px[best * h * w]) best = c;
        }
        o[((b * k + best) * out_h + y) * out_w + x] = 1.0;
      }
    }
  }
  return out;
}

ChannelAttention::ChannelAttention(ParameterStore& store, const std::string& name,
                                   int64_t channels, int64_t reduction, Rng& rng) {
  if (channels < reduction) {
    fail(ErrorCode::Config, "channel_attention: " + std::to_string(channels) +
                                " channels is fewer than reduction ratio " + std::to_string(reduction));
  }
  const int64_t hidden = channels / reduction;
  fc1 = Linear(store, name + ".fc1", channels, hidden, rng);
  fc2 = Linear(store, name + ".fc2", hidden, channels, rng);
}

ChannelAttentionOutput ChannelAttention::operator()(const Tensor& x) const {
  trace::Scope scope("channel_attention");
  const Tensor avg = fc2(ops::relu(fc1(ops::global_avg_pool(x))));
  const Tensor mx = fc2(ops::relu(fc1(ops::global_max_pool(x))));
  ChannelAttentionOutput out;
  out.weights = ops::sigmoid(ops::add(avg, mx));
  out.output = ops::scale_channels(x, out.weights);
  return out;
}

ChannelAttentionExtractor::ChannelAttentionExtractor(ParameterStore& store,
                                                     const std::string& prefix,
                                                     int64_t in_channels,
                                                     const std::array<int64_t, 3>& channels,
                                                     int64_t reduction, Rng& rng) {
  int64_t in = in_channels;
  for (int i = 0; i < 3; ++i) {
    const std::string name = prefix + ".block" + std::to_string(i);
    conv_[i] = Conv2d(store, name + ".conv", in, channels[i], 3, 2, 1, false, rng);
    bn_[i] = BatchNorm2d(store, name + ".bn", channels[i]);
    attn_[i] = ChannelAttention(store, name + ".attn", channels[i], reduction, rng);
    in = channels[i];
  }
}

Tensor ChannelAttentionExtractor::operator()(const Tensor& semantic) const {
  trace::Scope scope("semantic_extractor");
  Tensor x = semantic;
  for (int i = 0; i < 3; ++i) {
    x = ops::relu(bn_[i](conv_[i](x)));
    x = attn_[i](x).output;
  }
  return x;
}

GatedFusion::GatedFusion(ParameterStore& store, const std::string& prefix,
                         int64_t semantic_channels, int64_t rgb_channels, int64_t fusion_channels,
                         Rng& rng) {
  sem1 = Conv2d(store, prefix + ".sem1", semantic_channels, fusion_channels, 3, 1, 1, true, rng);
  sem2 = Conv2d(store, prefix + ".sem2", fusion_channels, fusion_channels, 1, 1, 0, true, rng);
  rgb1 = Conv2d(store, prefix + ".rgb1", rgb_channels, fusion_channels, 3, 1, 1, true, rng);
  rgb2 = Conv2d(store, prefix + ".rgb2", fusion_channels, fusion_channels, 1, 1, 0, true, rng);
}

FusionFeatures GatedFusion::operator()(const Tensor& f_m, const Tensor& f_i,
                                       const GateOverride& gate) const {
  if (f_m.rank() != 4 || f_i.rank() != 4 || f_m.dim(0) != f_i.dim(0) ||
      f_m.dim(2) != f_i.dim(2) || f_m.dim(3) != f_i.dim(3)) {
    fail(ErrorCode::Shape, "gated_fusion: semantic " + shape_str(f_m.shape()) +
                               " and RGB " + shape_str(f_i.shape()) + " are not spatially aligned");
  }
  trace::Scope scope("gated_fusion");
  FusionFeatures out;
  out.f_m = f_m;
  out.f_i = f_i;
  out.f_ia = rgb2(ops::relu(rgb1(f_i)));
  switch (gate.kind) {
    case GateOverride::Kind::None:
      out.gate_pre = sem2(ops::relu(sem1(f_m)));
      break;
    case GateOverride::Kind::PreActivation:
      out.gate_pre = Tensor(out.f_ia.shape(), gate.value);
      break;
    case GateOverride::Kind::Constant:
      out.gate_pre = Tensor(out.f_ia.shape(), 0.0);
      break;
  }
  if (out.gate_pre.shape() != out.f_ia.shape()) {
    fail(ErrorCode::Shape, "gated_fusion: gate " + shape_str(out.gate_pre.shape()) +
                               " does not match RGB map " + shape_str(out.f_ia.shape()));
  }
  out.f_ma = gate.kind == GateOverride::Kind::Constant ? Tensor(out.f_ia.shape(), gate.value)
                                                       : ops::sigmoid(out.gate_pre);
  out.f_a = ops::mul(out.f_ma, out.f_ia);
  return out;
}

SceneClassifier::SceneClassifier(ParameterStore& store, const std::string& name,
                                 int64_t in_channels, int64_t num_classes, Rng& rng)
    : fc(store, name, in_channels, num_classes, rng) {}

SceneLogits SceneClassifier::operator()(const Tensor& f_a) const {
  trace::Scope scope("classifier");
  SceneLogits out;
  out.f = fc(ops::global_avg_pool(f_a));
  out.y = ops::log_softmax(out.f);
  return out;
}

CamMap class_activation_map(const Tensor& f_a, const SceneClassifier& classifier, int64_t cls,
                            int64_t out_h, int64_t out_w, int64_t index) {
  const auto& w = classifier.fc.weight;
  if (cls < 0 || cls >= w.dim(0)) {
    fail(ErrorCode::InvalidArgument, "cam: class " + std::to_string(cls) + " outside [0, " +
                                         std::to_string(w.dim(0)) + ")");
  }
  if (f_a.rank() != 4 || f_a.dim(1) != w.dim(1) || index < 0 || index >= f_a.dim(0)) {
    fail(ErrorCode::Shape, "cam: feature map " + shape_str(f_a.shape()) +
                               " does not match classifier " + shape_str(w.shape()));
  }
  CamMap cam;
  const int64_t c = f_a.dim(1);
  cam.height = f_a.dim(2);
  cam.width = f_a.dim(3);
  const int64_t hw = cam.height * cam.width;
  cam.raw.assign(static_cast<size_t>(hw), 0.0);
  const double* base = f_a.data().data() + index * c * hw;
  for (int64_t ch = 0; ch < c; ++ch) {
    const double wt = w.data()[cls * c + ch];
    for (int64_t p = 0; p < hw; ++p) cam.raw[p] += wt * base[ch * hw + p];
  }

  NoGradGuard no_grad;
  const Tensor up =
      ops::upsample_bilinear(Tensor({1, 1, cam.height, cam.width}, cam.raw), out_h, out_w);
  cam.out_height = out_h;
  cam.out_width = out_w;
  cam.rendered.assign(up.data().begin(), up.data().end());
  const auto [lo, hi] = std::minmax_element(cam.rendered.begin(), cam.rendered.end());
  const double min_v = *lo, range = *hi - *lo;
  for (auto& v : cam.rendered) v = range > 0 ? (v - min_v) / range : 0.0;
  return cam;
}

RecogPath::RecogPath(ParameterStore& store, const RecogPathConfig& config,
                     const BackboneConfig& backbone, int64_t semantic_classes, Rng& rng,
                     const std::string& prefix)
    : config_(config) {
  config_.validate(backbone);
  const int64_t rgb_channels = backbone.stage_channels[3];
  int64_t head_channels = rgb_channels;
  if (config.semantic_branch) {
    extractor_ = std::make_unique<ChannelAttentionExtractor>(
        store, prefix + ".extractor", semantic_classes, config.extractor_channels,
        config.reduction, rng);
    head_channels = config.fusion_channels > 0 ? config.fusion_channels : rgb_channels;
    fusion_ = GatedFusion(store, prefix + ".fusion", config.extractor_channels[2], rgb_channels,
                          head_channels, rng);
  }
  classifier_ = SceneClassifier(store, prefix + ".classifier", head_channels, config.num_classes, rng);
}

RecogPath::Output RecogPath::forward(const Tensor& seg_logits_s4, const Tensor& s32,
                                     const GateOverride& gate) const {
  trace::Scope scope("recog_path");
  Output out;
  if (!config_.semantic_branch) {
    out.fusion.f_i = s32;
    out.fusion.f_a = s32;
    out.scene = classifier_(s32);
    return out;
  }
  const int64_t h = seg_logits_s4.dim(2), w = seg_logits_s4.dim(3);
  if (h != 8 * s32.dim(2) || w != 8 * s32.dim(3)) {
    fail(ErrorCode::Config, "semantic_extractor: score map " + shape_str(seg_logits_s4.shape()) +
                                " does not reach stride-32 map " + shape_str(s32.shape()) +
                                " in three stride-2 steps");
  }
  out.semantic = one_hot_encode(seg_logits_s4, h, w);
  const Tensor f_m = (*extractor_)(out.semantic);
  out.fusion = fusion_(f_m, s32, gate);
  out.scene = classifier_(out.fusion.f_a);
  return out;
}

}  // namespace mtnet
