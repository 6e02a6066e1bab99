// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "helpers.hpp"
#include "ops.hpp"
#include "trace.hpp"

using namespace mtnet;
using mtnet::testing::grad_check;
using mtnet::testing::randn;

namespace {

// Direct seven-loop convolution.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t co = w.dim(0), k = w.dim(2);
  const int64_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> y(static_cast<size_t>(n * co * ho * wo), 0.0);
  for (int64_t bi = 0; bi < n; ++bi)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          double acc = b.defined() ? b.data()[o] : 0.0;
          for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                acc += w.data()[((o * c + ci) * k + ky) * k + kx] * x.data()[((bi * c + ci) * h + iy) * wd + ix];
              }
          y[((bi * co + o) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d matches direct summation") {
  std::mt19937_64 rng(1);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {3, 2, 1}, {1, 1, 0}, {7, 2, 3}, {1, 2, 0}}) {
    const Tensor x = randn({2, 3, 9, 8}, rng);
    const Tensor w = randn({4, 3, k, k}, rng);
    const Tensor b = randn({4}, rng);
    const Tensor y = ops::conv2d(x, w, b, stride, pad);
    const auto ref = naive_conv(x, w, b, stride, pad);
    REQUIRE(y.numel() == static_cast<int64_t>(ref.size()));
    CHECK(mtnet::testing::max_abs_diff(y.data(), ref) < 1e-12);
  }
}

TEST_CASE("conv2d flop count closed form") {
  trace::FlopTracer t(true);
  const Tensor x({1, 3, 32, 32});
  const Tensor w({8, 3, 3, 3});
  ops::conv2d(x, w, Tensor(), 1, 1);
  CHECK(t.total() == doctest::Approx(442368.0));
}

TEST_CASE("conv2d rejects mismatched weights") {
  const Tensor x({1, 3, 8, 8});
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({4, 2, 3, 3}), Tensor(), 1, 1), Error);
}

TEST_CASE("op gradients agree with central differences") {
  std::mt19937_64 rng(2);
  auto weighted_sum = [&](const Tensor& y) {
    // Fixed random projection so every output element matters.
    std::mt19937_64 prng(99);
    const Tensor r = randn(y.shape(), prng);
    return ops::sum(ops::mul(y, r));
  };

  SUBCASE("conv2d") {
    Tensor x = randn({2, 3, 6, 5}, rng, 1.0, true);
    Tensor w = randn({4, 3, 3, 3}, rng, 1.0, true);
    Tensor b = randn({4}, rng, 1.0, true);
    const Tensor r = randn({2, 4, 3, 3}, rng);
    auto f = [&] { return ops::sum(ops::mul(ops::conv2d(x, w, b, 2, 1), r)); };
    CHECK(grad_check(f, {x, w, b}).rel_error < 1e-6);
  }
  SUBCASE("batch_norm training and eval") {
    Tensor x = randn({3, 2, 3, 3}, rng, 2.0, true);
    Tensor g = randn({2}, rng, 1.0, true);
    Tensor be = randn({2}, rng, 1.0, true);
    Tensor rm({2}, 0.3), rv({2}, 1.7);
    const Tensor r = randn({3, 2, 3, 3}, rng);
    for (bool training : {true, false}) {
      auto f = [&] {
        return ops::sum(ops::mul(ops::batch_norm(x, g, be, {rm, rv}, training, false), r));
      };
      CHECK(grad_check(f, {x, g, be}).rel_error < 1e-6);
    }
  }
  SUBCASE("pointwise, pooling and resampling") {
    Tensor x = randn({2, 3, 6, 6}, rng, 1.0, true);
    const std::vector<std::function<Tensor(const Tensor&)>> fns = {
        [](const Tensor& t) { return ops::relu(t); },
        [](const Tensor& t) { return ops::sigmoid(t); },
        [](const Tensor& t) { return ops::max_pool2d(t, 3, 2, 1); },
        [](const Tensor& t) { return ops::adaptive_avg_pool2d(t, 4, 3); },
        [](const Tensor& t) { return ops::upsample_bilinear(t, 11, 7); },
        [](const Tensor& t) { return ops::upsample_bilinear(t, 3, 4); },
        [](const Tensor& t) { return ops::global_avg_pool(t); },
        [](const Tensor& t) { return ops::global_max_pool(t); },
        [](const Tensor& t) { return ops::scale(t, -2.5); },
        [](const Tensor& t) { return ops::mul(t, t); },
        [](const Tensor& t) { return ops::axpby(t, 0.5, ops::relu(t), -3.0); },
        [](const Tensor& t) { return ops::concat_channels({t, ops::sigmoid(t)}); },
        [](const Tensor& t) { return ops::reshape(t, {2, 3, 36}); },
        [](const Tensor& t) { return ops::mean(t); },
    };
    for (const auto& fn : fns) {
      auto f = [&] { return weighted_sum(fn(x)); };
      CHECK(grad_check(f, {x}).rel_error < 1e-6);
    }
  }
  SUBCASE("scale_channels") {
    Tensor x = randn({2, 3, 4, 4}, rng, 1.0, true);
    Tensor w = randn({2, 3}, rng, 1.0, true);
    auto f = [&] { return weighted_sum(ops::scale_channels(x, w)); };
    CHECK(grad_check(f, {x, w}).rel_error < 1e-6);
  }
  SUBCASE("linear") {
    Tensor x = randn({4, 5}, rng, 1.0, true);
    Tensor w = randn({3, 5}, rng, 1.0, true);
    Tensor b = randn({3}, rng, 1.0, true);
    auto f = [&] { return weighted_sum(ops::linear(x, w, b)); };
    CHECK(grad_check(f, {x, w, b}).rel_error < 1e-6);
  }
  SUBCASE("matmul with every transpose combination, 2-D and batched") {
    for (bool batched : {false, true}) {
      for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
          Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
          Shape sb = tb ? Shape{5, 4} : Shape{4, 5};
          if (batched) {
            sa.insert(sa.begin(), 2);
            sb.insert(sb.begin(), 2);
          }
          Tensor a = randn(sa, rng, 1.0, true);
          Tensor b = randn(sb, rng, 1.0, true);
          auto f = [&] { return weighted_sum(ops::matmul(a, b, ta, tb)); };
          CHECK(grad_check(f, {a, b}).rel_error < 1e-6);
        }
      }
    }
  }
  SUBCASE("transpose, l2 normalize, log_softmax") {
    Tensor x = randn({2, 5, 3}, rng, 1.0, true);
    auto f1 = [&] { return weighted_sum(ops::transpose_last2(x)); };
    CHECK(grad_check(f1, {x}).rel_error < 1e-6);
    auto f2 = [&] { return weighted_sum(ops::l2_normalize_rows(x)); };
    CHECK(grad_check(f2, {x}).rel_error < 1e-6);
    Tensor z = randn({4, 6}, rng, 3.0, true);
    auto f3 = [&] { return weighted_sum(ops::log_softmax(z)); };
    CHECK(grad_check(f3, {z}).rel_error < 1e-6);
  }
  SUBCASE("nll and segmentation cross-entropy") {
    Tensor z = randn({4, 6}, rng, 3.0, true);
    const std::vector<int32_t> labels{0, 5, 2, 2};
    auto f = [&] { return ops::nll_loss(ops::log_softmax(z), labels); };
    CHECK(grad_check(f, {z}).rel_error < 1e-6);
    Tensor s = randn({2, 4, 3, 3}, rng, 2.0, true);
    std::vector<int32_t> sl(18);
    for (size_t i = 0; i < sl.size(); ++i) sl[i] = i % 5 == 0 ? 255 : static_cast<int32_t>(i % 4);
    auto g = [&] { return ops::seg_cross_entropy(s, sl, 255); };
    CHECK(grad_check(g, {s}).rel_error < 1e-6);
  }
}

TEST_CASE("bilinear resize uses half-pixel centres") {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = ops::upsample_bilinear(x, 4, 4);
  const std::vector<double> expect{1.0, 1.25, 1.75, 2.0, 1.5, 1.75, 2.25, 2.5,
                                   2.5, 2.75, 3.25, 3.5, 3.0, 3.25, 3.75, 4.0};
  CHECK(mtnet::testing::max_abs_diff(y.data(), expect) < 1e-12);
  const Tensor same = ops::upsample_bilinear(x, 2, 2);
  CHECK(mtnet::testing::max_abs_diff(same.data(), x.data()) == 0.0);
}

TEST_CASE("adaptive average pooling uses floor/ceil bins") {
  std::vector<double> v(25);
  for (int i = 0; i < 25; ++i) v[i] = i;
  const Tensor y = ops::adaptive_avg_pool2d(Tensor({1, 1, 5, 5}, v), 2, 2);
  // Bins cover rows/cols [0, 3) and [2, 5).
  auto avg = [&](int r0, int c0) {
    double s = 0;
    for (int r = r0; r < r0 + 3; ++r)
      for (int c = c0; c < c0 + 3; ++c) s += v[r * 5 + c];
    return s / 9;
  };
  CHECK(y.data()[0] == doctest::Approx(avg(0, 0)));
  CHECK(y.data()[1] == doctest::Approx(avg(0, 2)));
  CHECK(y.data()[2] == doctest::Approx(avg(2, 0)));
  CHECK(y.data()[3] == doctest::Approx(avg(2, 2)));
  CHECK_THROWS_AS(ops::adaptive_avg_pool2d(Tensor({1, 1, 2, 2}), 3, 3), Error);
}

TEST_CASE("batch norm running statistics") {
  Tensor x({2, 1, 1, 2}, {1.0, 2.0, 3.0, 6.0});
  Tensor g({1}, 1.0), b({1}, 0.0), rm({1}, 0.0), rv({1}, 1.0);
  ops::batch_norm(x, g, b, {rm, rv}, true, true);
  // mean 3, unbiased variance 14/3
  CHECK(rm.data()[0] == doctest::Approx(0.3));
  CHECK(rv.data()[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  const Tensor y = ops::batch_norm(x, g, b, {rm, rv}, false, false);
  CHECK(y.data()[0] == doctest::Approx((1.0 - rm.data()[0]) / std::sqrt(rv.data()[0] + 1e-5)));
}

TEST_CASE("l2 normalization keeps zero rows at zero") {
  const Tensor x({2, 3}, {0, 0, 0, 3, 0, 4});
  const Tensor y = ops::l2_normalize_rows(x);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[3] == doctest::Approx(0.6));
  CHECK(y.data()[5] == doctest::Approx(0.8));
}

TEST_CASE("log_softmax is overflow free and shift invariant") {
  const Tensor big({1, 3}, {1e4, -1e4, 0.0});
  const Tensor y = ops::log_softmax(big);
  for (double v : y.data()) CHECK(std::isfinite(v));
  CHECK(y.data()[0] == doctest::Approx(0.0));
  CHECK(y.data()[1] == doctest::Approx(-2e4));
  const Tensor f({1, 2}, {1000.0, 0.0});
  const Tensor yf = ops::log_softmax(f);
  CHECK(yf.data()[0] == doctest::Approx(0.0));
  CHECK(yf.data()[1] == doctest::Approx(-1000.0));

  std::mt19937_64 rng(3);
  const Tensor z = randn({3, 7}, rng, 5.0);
  Tensor shifted = z.clone();
  for (auto& v : shifted.data()) v += 123.25;
  CHECK(mtnet::testing::max_abs_diff(ops::log_softmax(z).data(), ops::log_softmax(shifted).data()) < 1e-9);
}

TEST_CASE("backward accumulates over shared inputs and resets intermediates") {
  Tensor x({2}, {1.0, -2.0});
  x.set_requires_grad(true);
  const Tensor y = ops::add(ops::mul(x, x), x);  // x^2 + x
  backward(ops::sum(y));
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
  backward(ops::sum(y));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("no-grad mode records no history") {
  Tensor x({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  NoGradGuard ng;
  const Tensor y = ops::mul(x, x);
  CHECK_FALSE(y.requires_grad());
}
