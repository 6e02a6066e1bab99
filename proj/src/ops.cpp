// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "error.hpp"
#include "trace.hpp"

namespace mtnet::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// Gradient buffer of input i, or nullptr when that input takes no gradient.
double* grad_of(detail::Node& self, size_t i) {
  if (i >= self.inputs.size() || !self.inputs[i] || !self.inputs[i]->requires_grad) return nullptr;
  return self.inputs[i]->ensure_grad().data();
}

const double* value_of(detail::Node& self, size_t i) { return self.inputs[i]->value.data(); }

void require_rank(const Tensor& x, int rank, const char* op) {
  if (x.rank() != rank) {
    fail(ErrorCode::Shape, std::string(op) + ": expected rank " + std::to_string(rank) +
                               ", got shape " + shape_str(x.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::Shape, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                               " vs " + shape_str(b.shape()));
  }
}

// Unfolds one image [C, H, W] into columns [C*k*k, Ho*Wo].
void im2col(const double* x, int64_t c, int64_t h, int64_t w, int k, int stride, int pad,
            int64_t ho, int64_t wo, double* cols) {
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          double* out = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          const double* src = x + (ci * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            out[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int64_t c, int64_t h, int64_t w, int k, int stride, int pad,
            int64_t ho, int64_t wo, double* x) {
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = x + (ci * h + iy) * w;
          const double* in = row + oy * wo;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

// Source taps for one axis of a half-pixel bilinear resize.
struct Taps {
  std::vector<int64_t> i0, i1;
  std::vector<double> w0, w1;
};

Taps bilinear_taps(int64_t in, int64_t out) {
  Taps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w0.resize(out);
  t.w1.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = scale * (static_cast<double>(o) + 0.5) - 0.5;
    if (src < 0) src = 0;
    int64_t i0 = static_cast<int64_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int64_t i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double l1 = src - static_cast<double>(i0);
    t.i0[o] = i0;
    t.i1[o] = i1;
    t.w0[o] = 1.0 - l1;
    t.w1[o] = l1;
  }
  return t;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t co = weight.dim(0);
  const int k = static_cast<int>(weight.dim(2));
  if (weight.dim(1) != c || weight.dim(3) != k) {
    fail(ErrorCode::Shape, "conv2d: weight " + shape_str(weight.shape()) +
                               " incompatible with input " + shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    fail(ErrorCode::Shape, "conv2d: bias " + shape_str(bias.shape()) + " for " +
                               std::to_string(co) + " output channels");
  }
  if (stride < 1 || pad < 0) fail(ErrorCode::InvalidArgument, "conv2d: bad stride/pad");
  const int64_t ho = (h + 2 * pad - k) / stride + 1;
  const int64_t wo = (w + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) {
    fail(ErrorCode::Shape, "conv2d: input " + shape_str(x.shape()) + " too small for kernel " +
                               std::to_string(k));
  }

  Tensor out = Tensor::make_result({n, co, ho, wo}, {x, weight, bias}, "conv2d");
  trace::record("conv2d", 2.0 * k * k * c * co * ho * wo * n);
  if (trace::dry_run()) return out;

  const int64_t kk = c * k * k;
  const int64_t hw = ho * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);
  std::vector<double> cols(direct ? 0 : static_cast<size_t>(kk * hw));
  CMapRM wm(weight.data().data(), co, kk);
  for (int64_t b = 0; b < n; ++b) {
    const double* xb = x.data().data() + b * c * h * w;
    if (!direct) im2col(xb, c, h, w, k, stride, pad, ho, wo, cols.data());
    CMapRM cm(direct ? xb : cols.data(), kk, hw);
    MapRM ym(out.data().data() + b * co * hw, co, hw);
    ym.noalias() = wm * cm;
    if (bias.defined()) {
      for (int64_t o = 0; o < co; ++o) ym.row(o).array() += bias.data()[o];
    }
  }

  out.set_backward([=](detail::Node& self) {
    const double* gy = self.grad.data();
    const double* xv = value_of(self, 0);
    const double* wv = value_of(self, 1);
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    double* gb = grad_of(self, 2);
    CMapRM wmat(wv, co, kk);
    std::vector<double> buf(direct ? 0 : static_cast<size_t>(kk * hw));
    for (int64_t b = 0; b < n; ++b) {
      CMapRM gym(gy + b * co * hw, co, hw);
      const double* xb = xv + b * c * h * w;
      if (gw) {
        if (!direct) im2col(xb, c, h, w, k, stride, pad, ho, wo, buf.data());
        CMapRM cm(direct ? xb : buf.data(), kk, hw);
        MapRM(gw, co, kk).noalias() += gym * cm.transpose();
      }
      if (gb) {
        for (int64_t o = 0; o < co; ++o) gb[o] += gym.row(o).sum();
      }
      if (gx) {
        if (direct) {
          MapRM(gx + b * c * h * w, kk, hw).noalias() += wmat.transpose() * gym;
        } else {
          MapRM(buf.data(), kk, hw).noalias() = wmat.transpose() * gym;
          col2im(buf.data(), c, h, w, k, stride, pad, ho, wo, gx + b * c * h * w);
        }
      }
    }
  });
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState state,
                  bool training, bool update_stats) {
  require_rank(x, 4, "batch_norm");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.numel() != c ||
      state.running_var.numel() != c) {
    fail(ErrorCode::Shape, "batch_norm: parameter size does not match " + std::to_string(c) +
                               " channels");
  }
  Tensor out = Tensor::make_result(x.shape(), {x, gamma, beta}, "batch_norm");
  trace::record("batch_norm", static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;

  const int64_t m = n * hw;
  if (training && m < 2) {
    fail(ErrorCode::Shape, "batch_norm: training needs more than one value per channel, got " +
                               shape_str(x.shape()));
  }
  std::vector<double> mean(c), inv_std(c);
  const auto xv = x.data();
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / static_cast<double>(m);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
      if (update_stats) {
        auto rm = state.running_mean.data();
        auto rv = state.running_var.data();
        const double unbiased = v / static_cast<double>(m - 1);
        rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu;
        rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * unbiased;
      }
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean.data()[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var.data()[ch] + state.eps);
    }
  }
  auto yv = out.data();
  const auto g = gamma.data();
  const auto bt = beta.data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* p = xv.data() + (b * c + ch) * hw;
      double* q = yv.data() + (b * c + ch) * hw;
      const double a = g[ch] * inv_std[ch];
      const double o = bt[ch] - mean[ch] * a;
      for (int64_t i = 0; i < hw; ++i) q[i] = p[i] * a + o;
    }
  }

  out.set_backward([=](detail::Node& self) {
    const double* gy = self.grad.data();
    const double* xin = value_of(self, 0);
    const double* gam = value_of(self, 1);
    double* gx = grad_of(self, 0);
    double* gg = grad_of(self, 1);
    double* gbeta = grad_of(self, 2);
    for (int64_t ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xin + (b * c + ch) * hw;
        const double* d = gy + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_dy += d[i];
          sum_dy_xhat += d[i] * (p[i] - mean[ch]) * inv_std[ch];
        }
      }
      if (gg) gg[ch] += sum_dy_xhat;
      if (gbeta) gbeta[ch] += sum_dy;
      if (!gx) continue;
      const double a = gam[ch] * inv_std[ch];
      const double inv_m = 1.0 / static_cast<double>(m);
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xin + (b * c + ch) * hw;
        const double* d = gy + (b * c + ch) * hw;
        double* q = gx + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          if (training) {
            const double xhat = (p[i] - mean[ch]) * inv_std[ch];
            q[i] += a * (d[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
          } else {
            q[i] += a * d[i];
          }
        }
      }
    }
  });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::make_result(x.shape(), {x}, "relu");
  trace::record("relu", static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  auto xv = x.data();
  auto yv = out.data();
  for (size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > 0 ? xv[i] : 0.0;
  out.set_backward([](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const double* xv2 = value_of(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (xv2[i] > 0) gx[i] += self.grad[i];
    }
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::make_result(x.shape(), {x}, "sigmoid");
  trace::record("sigmoid", static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  auto xv = x.data();
  auto yv = out.data();
  for (size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    yv[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  out.set_backward([](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
  return out;
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int pad) {
  require_rank(x, 4, "max_pool2d");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = (h + 2 * pad - kernel) / stride + 1;
  const int64_t wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) fail(ErrorCode::Shape, "max_pool2d: input too small " + shape_str(x.shape()));
  Tensor out = Tensor::make_result({n, c, ho, wo}, {x}, "max_pool2d");
  trace::record("max_pool2d", static_cast<double>(n * c * ho * wo) * kernel * kernel);
  if (trace::dry_run()) return out;
  std::vector<int64_t> arg(static_cast<size_t>(out.numel()));
  auto xv = x.data();
  auto yv = out.data();
  for (int64_t p = 0; p < n * c; ++p) {
    const double* src = xv.data() + p * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            if (src[iy * w + ix] > best || best_i < 0) {
              best = src[iy * w + ix];
              best_i = iy * w + ix;
            }
          }
        }
        const int64_t o = (p * ho + oy) * wo + ox;
        yv[o] = best;
        arg[o] = p * h * w + best_i;
      }
    }
  }
  out.set_backward([arg = std::move(arg)](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += self.grad[i];
  });
  return out;
}

Tensor adaptive_avg_pool2d(const Tensor& x, int64_t out_h, int64_t out_w) {
  require_rank(x, 4, "adaptive_avg_pool2d");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    fail(ErrorCode::Config, "adaptive_avg_pool2d: grid " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " exceeds input " + shape_str(x.shape()));
  }
  Tensor out = Tensor::make_result({n, c, out_h, out_w}, {x}, "adaptive_avg_pool2d");
  trace::record("adaptive_avg_pool2d", static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  auto edges = [](int64_t in, int64_t bins) {
    std::vector<std::pair<int64_t, int64_t>> e(static_cast<size_t>(bins));
    for (int64_t i = 0; i < bins; ++i) {
      e[i] = {(i * in) / bins, ((i + 1) * in + bins - 1) / bins};
    }
    return e;
  };
  const auto ey = edges(h, out_h);
  const auto ex = edges(w, out_w);
  auto xv = x.data();
  auto yv = out.data();
  for (int64_t p = 0; p < n * c; ++p) {
    for (int64_t oy = 0; oy < out_h; ++oy) {
      for (int64_t ox = 0; ox < out_w; ++ox) {
        double s = 0.0;
        for (int64_t iy = ey[oy].first; iy < ey[oy].second; ++iy) {
          for (int64_t ix = ex[ox].first; ix < ex[ox].second; ++ix) s += xv[(p * h + iy) * w + ix];
        }
        const double area = static_cast<double>((ey[oy].second - ey[oy].first) *
                                                (ex[ox].second - ex[ox].first));
        yv[(p * out_h + oy) * out_w + ox] = s / area;
      }
    }
  }
  out.set_backward([=](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (int64_t p = 0; p < n * c; ++p) {
      for (int64_t oy = 0; oy < out_h; ++oy) {
        for (int64_t ox = 0; ox < out_w; ++ox) {
          const double area = static_cast<double>((ey[oy].second - ey[oy].first) *
                                                  (ex[ox].second - ex[ox].first));
          const double g = self.grad[(p * out_h + oy) * out_w + ox] / area;
          for (int64_t iy = ey[oy].first; iy < ey[oy].second; ++iy) {
            for (int64_t ix = ex[ox].first; ix < ex[ox].second; ++ix) gx[(p * h + iy) * w + ix] += g;
          }
        }
      }
    }
  });
  return out;
}

Tensor upsample_bilinear(const Tensor& x, int64_t out_h, int64_t out_w) {
  require_rank(x, 4, "upsample_bilinear");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h < 1 || out_w < 1) fail(ErrorCode::Shape, "upsample_bilinear: empty output size");
  Tensor out = Tensor::make_result({n, c, out_h, out_w}, {x}, "upsample_bilinear");
  trace::record("upsample_bilinear", 4.0 * static_cast<double>(out.numel()));
  if (trace::dry_run()) return out;
  const Taps ty = bilinear_taps(h, out_h);
  const Taps tx = bilinear_taps(w, out_w);
  auto xv = x.data();
  auto yv = out.data();
  for (int64_t p = 0; p < n * c; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = yv.data() + p * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const double* r0 = src + ty.i0[oy] * w;
      const double* r1 = src + ty.i1[oy] * w;
      for (int64_t ox = 0; ox < out_w; ++ox) {
        dst[oy * out_w + ox] =
            ty.w0[oy] * (tx.w0[ox] * r0[tx.i0[ox]] + tx.w1[ox] * r0[tx.i1[ox]]) +
            ty.w1[oy] * (tx.w0[ox] * r1[tx.i0[ox]] + tx.w1[ox] * r1[tx.i1[ox]]);
      }
    }
  }
  out.set_backward([=](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (int64_t p = 0; p < n * c; ++p) {
      const double* g = self.grad.data() + p * out_h * out_w;
      double* dst = gx + p * h * w;
      for (int64_t oy = 0; oy < out_h; ++oy) {
        double* r0 = dst + ty.i0[oy] * w;
        double* r1 = dst + ty.i1[oy] * w;
        for (int64_t ox = 0; ox < out_w; ++ox) {
          const double v = g[oy * out_w + ox];
          r0[tx.i0[ox]] += ty.w0[oy] * tx.w0[ox] * v;
          r0[tx.i1[ox]] += ty.w0[oy] * tx.w1[ox] * v;
          r1[tx.i0[ox]] += ty.w1[oy] * tx.w0[ox] * v;
          r1[tx.i1[ox]] += ty.w1[oy] * tx.w1[ox] * v;
        }
      }
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return axpby(a, 1.0, b, 1.0); }

Tensor axpby(const Tensor& a, double wa, const Tensor& b, double wb) {
  require_same(a, b, "add");
  Tensor out = Tensor::make_result(a.shape(), {a, b}, "add");
  trace::record("add", static_cast<double>(a.numel()));
  if (trace::dry_run()) return out;
  auto av = a.data();
  auto bv = b.data();
  auto yv = out.data();
  for (size_t i = 0; i < av.size(); ++i) yv[i] = wa * av[i] + wb * bv[i];
  out.set_backward([wa, wb](detail::Node& self) {
    if (double* ga = grad_of(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += wa * self.grad[i];
    }
    if (double* gb = grad_of(self, 1)) {
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] += wb * self.grad[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out = Tensor::make_result(a.shape(), {a, b}, "mul");
  trace::record("mul", static_cast<double>(a.numel()));
  if (trace::dry_run()) return out;
  auto av = a.data();
  auto bv = b.data();
  auto yv = out.data();
  for (size_t i = 0; i < av.size(); ++i) yv[i] = av[i] * bv[i];
  out.set_backward([](detail::Node& self) {
    const double* av2 = value_of(self, 0);
    const double* bv2 = value_of(self, 1);
    if (double* ga = grad_of(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += bv2[i] * self.grad[i];
    }
    if (double* gb = grad_of(self, 1)) {
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] += av2[i] * self.grad[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::make_result(a.shape(), {a}, "scale");
  trace::record("scale", static_cast<double>(a.numel()));
  if (trace::dry_run()) return out;
  auto av = a.data();
  auto yv = out.data();
  for (size_t i = 0; i < av.size(); ++i) yv[i] = s * av[i];
  out.set_backward([s](detail::Node& self) {
    if (double* ga = grad_of(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += s * self.grad[i];
    }
  });
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& w) {
  require_rank(x, 4, "scale_channels");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (w.rank() != 2 || w.dim(0) != n || w.dim(1) != c) {
    fail(ErrorCode::Shape, "scale_channels: weights " + shape_str(w.shape()) + " for input " +
                               shape_str(x.shape()));
  }
  Tensor out = Tensor::make_result(x.shape(), {x, w}, "scale_channels");
  trace::record("scale_channels", static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  auto xv = x.data();
  auto wv = w.data();
  auto yv = out.data();
  for (int64_t p = 0; p < n * c; ++p) {
    for (int64_t i = 0; i < hw; ++i) yv[p * hw + i] = wv[p] * xv[p * hw + i];
  }
  out.set_backward([=](detail::Node& self) {
    const double* xin = value_of(self, 0);
    const double* win = value_of(self, 1);
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    for (int64_t p = 0; p < n * c; ++p) {
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) {
        const double g = self.grad[p * hw + i];
        if (gx) gx[p * hw + i] += win[p] * g;
        acc += xin[p * hw + i] * g;
      }
      if (gw) gw[p] += acc;
    }
  });
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail(ErrorCode::InvalidArgument, "concat_channels: no inputs");
  const int64_t n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int64_t c = 0;
  for (const auto& t : xs) {
    require_rank(t, 4, "concat_channels");
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      fail(ErrorCode::Shape, "concat_channels: " + shape_str(t.shape()) + " vs " +
                                 shape_str(xs[0].shape()));
    }
    c += t.dim(1);
  }
  Tensor out = Tensor::make_result({n, c, h, w}, xs, "concat_channels");
  if (trace::dry_run()) return out;
  std::vector<int64_t> widths;
  for (const auto& t : xs) widths.push_back(t.dim(1) * h * w);
  auto yv = out.data();
  for (int64_t b = 0; b < n; ++b) {
    int64_t off = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      const double* src = xs[i].data().data() + b * widths[i];
      std::copy(src, src + widths[i], yv.data() + b * c * h * w + off);
      off += widths[i];
    }
  }
  out.set_backward([=](detail::Node& self) {
    int64_t off = 0;
    for (size_t i = 0; i < widths.size(); ++i) {
      if (double* g = grad_of(self, i)) {
        for (int64_t b = 0; b < n; ++b) {
          const double* src = self.grad.data() + b * c * h * w + off;
          for (int64_t j = 0; j < widths[i]; ++j) g[b * widths[i] + j] += src[j];
        }
      }
      off += widths[i];
    }
  });
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::make_result({n, c}, {x}, "global_avg_pool");
  trace::record("global_avg_pool", static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  auto xv = x.data();
  auto yv = out.data();
  for (int64_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (int64_t i = 0; i < hw; ++i) s += xv[p * hw + i];
    yv[p] = s / static_cast<double>(hw);
  }
  out.set_backward([=](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (int64_t p = 0; p < n * c; ++p) {
      const double g = self.grad[p] / static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
    }
  });
  return out;
}

Tensor global_max_pool(const Tensor& x) {
  require_rank(x, 4, "global_max_pool");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::make_result({n, c}, {x}, "global_max_pool");
  trace::record("global_max_pool", static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  std::vector<int64_t> arg(static_cast<size_t>(n * c));
  auto xv = x.data();
  auto yv = out.data();
  for (int64_t p = 0; p < n * c; ++p) {
    int64_t best = 0;
    for (int64_t i = 1; i < hw; ++i) {
      if (xv[p * hw + i] > xv[p * hw + best]) best = i;
    }
    arg[p] = p * hw + best;
    yv[p] = xv[arg[p]];
  }
  out.set_backward([arg = std::move(arg)](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (size_t p = 0; p < arg.size(); ++p) gx[arg[p]] += self.grad[p];
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int64_t n = x.dim(0), in = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != in) {
    fail(ErrorCode::Shape, "linear: weight " + shape_str(weight.shape()) + " for input " +
                               shape_str(x.shape()));
  }
  if (bias.defined() && bias.numel() != o) {
    fail(ErrorCode::Shape, "linear: bias " + shape_str(bias.shape()) + " for " +
                               std::to_string(o) + " outputs");
  }
  Tensor out = Tensor::make_result({n, o}, {x, weight, bias}, "linear");
  trace::record("linear", 2.0 * n * in * o);
  if (trace::dry_run()) return out;
  CMapRM xm(x.data().data(), n, in);
  CMapRM wm(weight.data().data(), o, in);
  MapRM ym(out.data().data(), n, o);
  ym.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    for (int64_t r = 0; r < n; ++r) {
      for (int64_t j = 0; j < o; ++j) ym(r, j) += bias.data()[j];
    }
  }
  out.set_backward([=](detail::Node& self) {
    CMapRM gy(self.grad.data(), n, o);
    if (double* gx = grad_of(self, 0)) {
      MapRM(gx, n, in).noalias() += gy * CMapRM(value_of(self, 1), o, in);
    }
    if (double* gw = grad_of(self, 1)) {
      MapRM(gw, o, in).noalias() += gy.transpose() * CMapRM(value_of(self, 0), n, in);
    }
    if (double* gb = grad_of(self, 2)) {
      for (int64_t j = 0; j < o; ++j) gb[j] += gy.col(j).sum();
    }
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3)) {
    fail(ErrorCode::Shape, "matmul: unsupported operand shapes " + shape_str(a.shape()) + " and " +
                               shape_str(b.shape()));
  }
  const bool batched = a.rank() == 3;
  const int64_t batch = batched ? a.dim(0) : 1;
  if (batched && b.dim(0) != batch) {
    fail(ErrorCode::Shape, "matmul: batch mismatch " + shape_str(a.shape()) + " vs " +
                               shape_str(b.shape()));
  }
  const int64_t ar = a.dim(-2), ac = a.dim(-1), br = b.dim(-2), bc = b.dim(-1);
  const int64_t m = trans_a ? ac : ar;
  const int64_t k = trans_a ? ar : ac;
  const int64_t k2 = trans_b ? bc : br;
  const int64_t nn = trans_b ? br : bc;
  if (k != k2) {
    fail(ErrorCode::Shape, "matmul: inner dimensions differ for " + shape_str(a.shape()) +
                               (trans_a ? "^T" : "") + " x " + shape_str(b.shape()) +
                               (trans_b ? "^T" : ""));
  }
  Shape shape = batched ? Shape{batch, m, nn} : Shape{m, nn};
  Tensor out = Tensor::make_result(shape, {a, b}, "matmul");
  trace::record("matmul", 2.0 * batch * m * k * nn);
  if (trace::dry_run()) return out;
  for (int64_t i = 0; i < batch; ++i) {
    CMapRM am(a.data().data() + i * ar * ac, ar, ac);
    CMapRM bm(b.data().data() + i * br * bc, br, bc);
    MapRM ym(out.data().data() + i * m * nn, m, nn);
    if (!trans_a && !trans_b) ym.noalias() = am * bm;
    else if (trans_a && !trans_b) ym.noalias() = am.transpose() * bm;
    else if (!trans_a && trans_b) ym.noalias() = am * bm.transpose();
    else ym.noalias() = am.transpose() * bm.transpose();
  }
  out.set_backward([=](detail::Node& self) {
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    for (int64_t i = 0; i < batch; ++i) {
      CMapRM gy(self.grad.data() + i * m * nn, m, nn);
      CMapRM am(value_of(self, 0) + i * ar * ac, ar, ac);
      CMapRM bm(value_of(self, 1) + i * br * bc, br, bc);
      // op(A) = m x k, op(B) = k x nn; dop(A) = G op(B)^T, dop(B) = op(A)^T G.
      if (ga) {
        MapRM g(ga + i * ar * ac, ar, ac);
        if (!trans_a && !trans_b) g.noalias() += gy * bm.transpose();
        else if (!trans_a && trans_b) g.noalias() += gy * bm;
        else if (trans_a && !trans_b) g.noalias() += bm * gy.transpose();
        else g.noalias() += bm.transpose() * gy.transpose();
      }
      if (gb) {
        MapRM g(gb + i * br * bc, br, bc);
        if (!trans_a && !trans_b) g.noalias() += am.transpose() * gy;
        else if (trans_a && !trans_b) g.noalias() += am * gy;
        else if (!trans_a && trans_b) g.noalias() += gy.transpose() * am;
        else g.noalias() += gy.transpose() * am.transpose();
      }
    }
  });
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) fail(ErrorCode::Shape, "transpose_last2: rank < 2");
  const int64_t r = x.dim(-2), c = x.dim(-1);
  const int64_t batch = x.numel() / (r * c);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Tensor out = Tensor::make_result(shape, {x}, "transpose");
  if (trace::dry_run()) return out;
  for (int64_t i = 0; i < batch; ++i) {
    MapRM(out.data().data() + i * r * c, c, r) = CMapRM(x.data().data() + i * r * c, r, c).transpose();
  }
  out.set_backward([=](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (int64_t i = 0; i < batch; ++i) {
      MapRM(gx + i * r * c, r, c) += CMapRM(self.grad.data() + i * r * c, c, r).transpose();
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(ErrorCode::Shape, "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor out = Tensor::make_result(std::move(shape), {x}, "reshape");
  if (trace::dry_run()) return out;
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  out.set_backward([](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
  return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
  if (x.rank() < 1) fail(ErrorCode::Shape, "l2_normalize_rows: scalar input");
  const int64_t c = x.dim(-1);
  const int64_t rows = c == 0 ? 0 : x.numel() / c;
  Tensor out = Tensor::make_result(x.shape(), {x}, "l2_normalize_rows");
  trace::record("l2_normalize_rows", 3.0 * static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  std::vector<double> norms(static_cast<size_t>(rows));
  auto xv = x.data();
  auto yv = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += xv[r * c + j] * xv[r * c + j];
    const double nrm = std::sqrt(s);
    norms[r] = nrm;
    for (int64_t j = 0; j < c; ++j) yv[r * c + j] = nrm > 0 ? xv[r * c + j] / nrm : 0.0;
  }
  out.set_backward([=, norms = std::move(norms)](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (int64_t r = 0; r < rows; ++r) {
      if (norms[r] <= 0) continue;
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += self.grad[r * c + j] * self.value[r * c + j];
      for (int64_t j = 0; j < c; ++j) {
        gx[r * c + j] += (self.grad[r * c + j] - self.value[r * c + j] * dot) / norms[r];
      }
    }
  });
  return out;
}

Tensor log_softmax(const Tensor& x) {
  require_rank(x, 2, "log_softmax");
  const int64_t n = x.dim(0), k = x.dim(1);
  Tensor out = Tensor::make_result(x.shape(), {x}, "log_softmax");
  trace::record("log_softmax", 3.0 * static_cast<double>(x.numel()));
  if (trace::dry_run()) return out;
  auto xv = x.data();
  auto yv = out.data();
  for (int64_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < k; ++j) mx = std::max(mx, xv[r * k + j]);
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(xv[r * k + j] - mx);
    const double lse = mx + std::log(s);
    for (int64_t j = 0; j < k; ++j) yv[r * k + j] = xv[r * k + j] - lse;
  }
  out.set_backward([=](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (int64_t r = 0; r < n; ++r) {
      double gs = 0.0;
      for (int64_t j = 0; j < k; ++j) gs += self.grad[r * k + j];
      for (int64_t j = 0; j < k; ++j) {
        gx[r * k + j] += self.grad[r * k + j] - std::exp(self.value[r * k + j]) * gs;
      }
    }
  });
  return out;
}

Tensor nll_loss(const Tensor& log_probs, std::span<const int32_t> labels) {
  require_rank(log_probs, 2, "nll_loss");
  const int64_t n = log_probs.dim(0), k = log_probs.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    fail(ErrorCode::Shape, "nll_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                               std::to_string(n));
  }
  if (n == 0) fail(ErrorCode::InvalidArgument, "nll_loss: empty batch");
  for (auto l : labels) {
    if (l < 0 || l >= k) {
      fail(ErrorCode::InvalidArgument, "nll_loss: label " + std::to_string(l) +
                                           " outside [0, " + std::to_string(k) + ")");
    }
  }
  Tensor out = Tensor::make_result({}, {log_probs}, "nll_loss");
  trace::record("nll_loss", static_cast<double>(n));
  std::vector<int32_t> lab(labels.begin(), labels.end());
  double s = 0.0;
  for (int64_t r = 0; r < n; ++r) s -= log_probs.data()[r * k + lab[r]];
  out.data()[0] = s / static_cast<double>(n);
  out.set_backward([=, lab = std::move(lab)](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (int64_t r = 0; r < n; ++r) gx[r * k + lab[r]] -= self.grad[0] / static_cast<double>(n);
  });
  return out;
}

Tensor seg_cross_entropy(const Tensor& logits, std::span<const int32_t> labels,
                         int32_t ignore_index, bool* all_ignored) {
  require_rank(logits, 4, "seg_cross_entropy");
  const int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (static_cast<int64_t>(labels.size()) != n * hw) {
    fail(ErrorCode::Shape, "seg_cross_entropy: " + std::to_string(labels.size()) +
                               " labels for logits " + shape_str(logits.shape()));
  }
  int64_t counted = 0;
  for (auto l : labels) {
    if (l == ignore_index) continue;
    if (l < 0 || l >= k) {
      fail(ErrorCode::InvalidArgument, "seg_cross_entropy: label " + std::to_string(l) +
                                           " outside [0, " + std::to_string(k) + ")");
    }
    ++counted;
  }
  if (all_ignored) *all_ignored = counted == 0;
  Tensor out = Tensor::make_result({}, {logits}, "seg_cross_entropy");
  trace::record("seg_cross_entropy", 3.0 * static_cast<double>(logits.numel()));
  if (counted == 0 || trace::dry_run()) return out;

  // Per-pixel log-sum-exp, kept for the backward pass.
  std::vector<double> lse(static_cast<size_t>(n * hw));
  const auto xv = logits.data();
  double total = 0.0;
  for (int64_t b = 0; b < n; ++b) {
    const double* base = xv.data() + b * k * hw;
    for (int64_t p = 0; p < hw; ++p) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < k; ++j) mx = std::max(mx, base[j * hw + p]);
      double s = 0.0;
      for (int64_t j = 0; j < k; ++j) s += std::exp(base[j * hw + p] - mx);
      lse[b * hw + p] = mx + std::log(s);
      const int32_t l = labels[b * hw + p];
      if (l != ignore_index) total += lse[b * hw + p] - base[l * hw + p];
    }
  }
  out.data()[0] = total / static_cast<double>(counted);
  std::vector<int32_t> lab(labels.begin(), labels.end());
  out.set_backward([=, lse = std::move(lse), lab = std::move(lab)](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const double g = self.grad[0] / static_cast<double>(counted);
    const double* base_all = value_of(self, 0);
    for (int64_t b = 0; b < n; ++b) {
      const double* base = base_all + b * k * hw;
      double* gb = gx + b * k * hw;
      for (int64_t p = 0; p < hw; ++p) {
        const int32_t l = lab[b * hw + p];
        if (l == ignore_index) continue;
        for (int64_t j = 0; j < k; ++j) gb[j * hw + p] += g * std::exp(base[j * hw + p] - lse[b * hw + p]);
        gb[l * hw + p] -= g;
      }
    }
  });
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::make_result({}, {x}, "sum");
  trace::record("sum", static_cast<double>(x.numel()));
  double s = 0.0;
  for (double v : x.data()) s += v;
  out.data()[0] = s;
  out.set_backward([](detail::Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const size_t count = self.inputs[0]->value.size();
    for (size_t i = 0; i < count; ++i) gx[i] += self.grad[0];
  });
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) fail(ErrorCode::InvalidArgument, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace mtnet::ops
