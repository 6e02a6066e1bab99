// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

// Differentiable tensor ops. Feature maps are NCHW; matrices are either
// [rows, cols] or batched [batch, rows, cols].
namespace mtnet::ops {

/// 2-D convolution with square kernel. `bias` may be an undefined Tensor.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad);

struct BatchNormState {
  Tensor& running_mean;
  Tensor& running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization. In training mode the batch statistics are used
/// and, when `update_stats` is set, folded into the running buffers.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState state,
                  bool training, bool update_stats);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad);
/// Average pooling onto an out_h x out_w grid with floor/ceil bin edges.
Tensor adaptive_avg_pool2d(const Tensor& x, int64_t out_h, int64_t out_w);
/// Bilinear resize, half-pixel centres (align_corners = false).
Tensor upsample_bilinear(const Tensor& x, int64_t out_h, int64_t out_w);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a * wa + b * wb for same-shaped tensors.
Tensor axpby(const Tensor& a, double wa, const Tensor& b, double wb);
/// x[n, c, :, :] * w[n, c]
Tensor scale_channels(const Tensor& x, const Tensor& w);
Tensor concat_channels(const std::vector<Tensor>& xs);

/// NCHW -> [N, C]
Tensor global_avg_pool(const Tensor& x);
Tensor global_max_pool(const Tensor& x);

/// x[N, I] * w[O, I]^T + b[O]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Matrix product over 2-D or batched 3-D operands with optional transposes.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
/// Swaps the last two dimensions.
Tensor transpose_last2(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// Scales every row (last dimension) to unit L2 norm; all-zero rows stay zero.
Tensor l2_normalize_rows(const Tensor& x);

/// Log-softmax over the last dimension of [N, K].
Tensor log_softmax(const Tensor& x);
/// Mean negative log-likelihood of `labels` under log-probabilities [N, K].
Tensor nll_loss(const Tensor& log_probs, std::span<const int32_t> labels);
/// Per-pixel NLL of softmax(logits) over NCHW logits, averaged over pixels
/// whose label differs from ignore_index. Returns 0 when every pixel is
/// ignored and sets *all_ignored.
Tensor seg_cross_entropy(const Tensor& logits, std::span<const int32_t> labels,
                         int32_t ignore_index, bool* all_ignored = nullptr);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace mtnet::ops
