// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "seg_path.hpp"

#include <algorithm>

#include "error.hpp"
#include "ops.hpp"
#include "trace.hpp"

namespace mtnet {

void SegPathConfig::validate() const {
  if (num_classes < 1 || decoder_channels < 1 || attn_channels < 1) {
    fail(ErrorCode::Config, "seg.num_classes, seg.decoder_channels and seg.attn_channels must be positive");
  }
  if (attn_channels > decoder_channels) {
    fail(ErrorCode::Config, "seg.attn_channels must not exceed seg.decoder_channels");
  }
  if (spp_grids.empty()) fail(ErrorCode::Config, "seg.spp_grids must not be empty");
  for (size_t i = 0; i < spp_grids.size(); ++i) {
    if (spp_grids[i] < 1) fail(ErrorCode::Config, "seg.spp_grids entries must be positive");
    if (i > 0 && spp_grids[i] <= spp_grids[i - 1]) {
      fail(ErrorCode::Config, "seg.spp_grids must be strictly ascending");
    }
  }
}

Tensor l2_normalize_rows(const Tensor& x) { return ops::l2_normalize_rows(x); }

namespace {

void check_attention_shapes(const Tensor& q, const Tensor& k, const Tensor& v) {
  const bool ranks_ok = q.rank() == k.rank() && k.rank() == v.rank() && (q.rank() == 2 || q.rank() == 3);
  bool ok = ranks_ok;
  if (ok) {
    ok = q.dim(-1) == k.dim(-1) && k.dim(-2) == v.dim(-2) && q.dim(-2) == k.dim(-2);
    if (q.rank() == 3) ok = ok && q.dim(0) == k.dim(0) && k.dim(0) == v.dim(0);
  }
  if (!ok) {
    fail(ErrorCode::Shape, "fast_attention: incompatible shapes Q " + shape_str(q.shape()) +
                               ", K " + shape_str(k.shape()) + ", V " + shape_str(v.shape()));
  }
  if (k.dim(-2) == 0) fail(ErrorCode::Shape, "fast_attention: zero positions");
}

}  // namespace

Tensor fast_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_attention_shapes(q, k, v);
  const double n = static_cast<double>(k.dim(-2));
  const Tensor qn = ops::l2_normalize_rows(q);
  const Tensor kn = ops::l2_normalize_rows(k);
  const Tensor kv = ops::matmul(kn, v, /*trans_a=*/true, false);
  return ops::scale(ops::matmul(qn, kv), 1.0 / n);
}

Tensor fast_attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_attention_shapes(q, k, v);
  const double n = static_cast<double>(k.dim(-2));
  const Tensor qn = ops::l2_normalize_rows(q);
  const Tensor kn = ops::l2_normalize_rows(k);
  const Tensor affinity = ops::matmul(qn, kn, false, /*trans_b=*/true);
  return ops::scale(ops::matmul(affinity, v), 1.0 / n);
}

Tensor to_positions(const Tensor& fmap) {
  const int64_t n = fmap.dim(0), c = fmap.dim(1), hw = fmap.dim(2) * fmap.dim(3);
  return ops::transpose_last2(ops::reshape(fmap, {n, c, hw}));
}

Tensor from_positions(const Tensor& rows, int64_t h, int64_t w) {
  const int64_t n = rows.dim(0), c = rows.dim(2);
  return ops::reshape(ops::transpose_last2(rows), {n, c, h, w});
}

Spp::Spp(ParameterStore& store, const std::string& name, int64_t in_channels,
         int64_t out_channels, std::vector<int64_t> grids, Rng& rng)
    : grids_(std::move(grids)) {
  const int64_t branch_channels =
      std::max<int64_t>(1, out_channels / static_cast<int64_t>(grids_.size()));
  for (size_t i = 0; i < grids_.size(); ++i) {
    branch_.emplace_back(store, name + ".branch" + std::to_string(i), in_channels,
                         branch_channels, 1, 1, 0, true, rng);
  }
  const int64_t cat_channels = in_channels + branch_channels * static_cast<int64_t>(grids_.size());
  fuse_ = Conv2d(store, name + ".fuse", cat_channels, out_channels, 1, 1, 0, false, rng);
  fuse_bn_ = BatchNorm2d(store, name + ".fuse_bn", out_channels);
}

Tensor Spp::operator()(const Tensor& x) const {
  const int64_t h = x.dim(2), w = x.dim(3);
  for (auto g : grids_) {
    if (g > h || g > w) {
      fail(ErrorCode::Config, "spp: grid " + std::to_string(g) + " larger than feature map " +
                                  std::to_string(h) + "x" + std::to_string(w));
    }
  }
  trace::Scope scope("spp");
  std::vector<Tensor> parts{x};
  for (size_t i = 0; i < grids_.size(); ++i) {
    Tensor p = ops::adaptive_avg_pool2d(x, grids_[i], grids_[i]);
    p = ops::relu(branch_[i](p));
    parts.push_back(ops::upsample_bilinear(p, h, w));
  }
  return ops::relu(fuse_bn_(fuse_(ops::concat_channels(parts))));
}

LateralFuse::LateralFuse(ParameterStore& store, const std::string& name, int64_t skip_channels,
                         int64_t decoder_channels, int64_t attn_channels, bool attention, Rng& rng)
    : attention_(attention) {
  proj = Conv2d(store, name + ".proj", skip_channels, decoder_channels, 1, 1, 0, true, rng);
  if (attention_) {
    query = Conv2d(store, name + ".query", decoder_channels, attn_channels, 1, 1, 0, false, rng);
    key = Conv2d(store, name + ".key", decoder_channels, attn_channels, 1, 1, 0, false, rng);
    value = Conv2d(store, name + ".value", decoder_channels, decoder_channels, 1, 1, 0, false, rng);
  }
}

Tensor LateralFuse::operator()(const Tensor& decoder_feat, const Tensor& skip_feat) const {
  const int64_t h = skip_feat.dim(2), w = skip_feat.dim(3);
  if (decoder_feat.rank() != 4 || skip_feat.rank() != 4 || h != 2 * decoder_feat.dim(2) ||
      w != 2 * decoder_feat.dim(3) || decoder_feat.dim(0) != skip_feat.dim(0)) {
    fail(ErrorCode::Shape, "lateral_fuse: skip " + shape_str(skip_feat.shape()) +
                               " must be twice the spatial size of decoder " +
                               shape_str(decoder_feat.shape()));
  }
  Tensor lateral = proj(skip_feat);
  if (attention_) {
    trace::Scope scope("fast_attention");
    const Tensor y = fast_attention(to_positions(query(lateral)), to_positions(key(lateral)),
                                    to_positions(value(lateral)));
    lateral = ops::add(lateral, from_positions(y, h, w));
  }
  return ops::add(ops::upsample_bilinear(decoder_feat, h, w), lateral);
}

SegPath::SegPath(ParameterStore& store, const SegPathConfig& config,
                 const BackboneConfig& backbone, Rng& rng, const std::string& prefix)
    : config_(config) {
  config_.validate();
  const int64_t d = config.decoder_channels;
  spp_ = Spp(store, prefix + ".spp", backbone.stage_channels[3], d, config.spp_grids, rng);
  // Level 0 joins stage s16, level 1 s8, level 2 s4.
  for (int level = 0; level < 3; ++level) {
    const std::string name = prefix + ".up" + std::to_string(level);
    laterals_[level] = LateralFuse(store, name + ".lateral", backbone.stage_channels[2 - level], d,
                                   config.attn_channels, config.attention_levels[level], rng);
    blend_[level] = Conv2d(store, name + ".blend", d, d, 3, 1, 1, false, rng);
    blend_bn_[level] = BatchNorm2d(store, name + ".blend_bn", d);
  }
  classifier_ = Conv2d(store, prefix + ".classifier", d, config.num_classes, 1, 1, 0, true, rng);
}

SegOutput SegPath::forward(const StageFeatures& f, int64_t out_h, int64_t out_w) const {
  trace::Scope scope("seg_path");
  Tensor x = spp_(f.s32);
  const Tensor* skips[3] = {&f.s16, &f.s8, &f.s4};
  for (int level = 0; level < 3; ++level) {
    trace::Scope lvl("up" + std::to_string(level));
    x = laterals_[level](x, *skips[level]);
    x = ops::relu(blend_bn_[level](blend_[level](x)));
  }
  SegOutput out;
  out.logits_s4 = classifier_(x);
  out.logits = ops::upsample_bilinear(out.logits_s4, out_h, out_w);
  return out;
}

SegOutput segment(const Backbone& backbone, const SegPath& seg, const Tensor& image) {
  const StageFeatures f = backbone.encode(image);
  return seg.forward(f, image.dim(2), image.dim(3));
}

}  // namespace mtnet
