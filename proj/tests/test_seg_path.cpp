// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include <doctest.h>

#include "backbone.hpp"
#include "error.hpp"
#include "fixtures.hpp"
#include "helpers.hpp"
#include "ops.hpp"
#include "seg_path.hpp"
#include "trace.hpp"

using namespace mtnet;
using mtnet::testing::grad_check;
using mtnet::testing::max_abs_diff;
using mtnet::testing::randn;

namespace {

double attention_flops(int64_t n, int64_t cq, int64_t c) {
  trace::FlopTracer t(true);
  fast_attention(Tensor({n, cq}), Tensor({n, cq}), Tensor({n, c}));
  return t.total();
}

}  // namespace

TEST_CASE("fast attention equals the affinity-first oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int64_t> dn(1, 300), dq(1, 16), dc(1, 24);
  for (int i = 0; i < 40; ++i) {
    const int64_t n = dn(rng), cq = dq(rng), c = dc(rng);
    const Tensor q = randn({n, cq}, rng), k = randn({n, cq}, rng), v = randn({n, c}, rng);
    CHECK(max_abs_diff(fast_attention(q, k, v).data(), fast_attention_oracle(q, k, v).data()) < 1e-10);
  }
  const Tensor q = randn({3, 50, 4}, rng), k = randn({3, 50, 4}, rng), v = randn({3, 50, 6}, rng);
  CHECK(max_abs_diff(fast_attention(q, k, v).data(), fast_attention_oracle(q, k, v).data()) < 1e-10);
}

TEST_CASE("fast attention worked example") {
  // Rows normalize to e1, e2; affinity is the identity.
  const Tensor q({2, 2}, {2, 0, 0, 5});
  const Tensor k({2, 2}, {3, 0, 0, 0.5});
  const Tensor v({2, 1}, {4, 8});
  const Tensor y = fast_attention(q, k, v);
  CHECK(y.data()[0] == doctest::Approx(2.0));
  CHECK(y.data()[1] == doctest::Approx(4.0));
}

TEST_CASE("fast attention zero query rows give zero output") {
  std::mt19937_64 rng(12);
  Tensor q = randn({5, 3}, rng);
  for (int j = 0; j < 3; ++j) q.data()[6 + j] = 0.0;
  const Tensor y = fast_attention(q, randn({5, 3}, rng), randn({5, 4}, rng));
  for (int j = 0; j < 4; ++j) CHECK(y.data()[2 * 4 + j] == 0.0);
}

TEST_CASE("fast attention rejects bad shapes") {
  CHECK_THROWS_AS(fast_attention(Tensor({4, 3}), Tensor({4, 2}), Tensor({4, 5})), Error);
  CHECK_THROWS_AS(fast_attention(Tensor({4, 3}), Tensor({5, 3}), Tensor({5, 5})), Error);
  CHECK_THROWS_AS(fast_attention(Tensor({4, 3}), Tensor({4, 3}), Tensor({3, 5})), Error);
}

TEST_CASE("fast attention cost is linear in positions and quadratic in channels") {
  CHECK(attention_flops(2048, 32, 64) / attention_flops(1024, 32, 64) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(attention_flops(1024, 64, 64) / attention_flops(1024, 32, 32) == doctest::Approx(4.0).epsilon(0.1));
  // 6nc' for normalization, 4nc'c for the two products, nc for the 1/n scale.
  CHECK(attention_flops(100, 8, 16) == doctest::Approx(6.0 * 100 * 8 + 4.0 * 100 * 8 * 16 + 100 * 16));
}

TEST_CASE("fast attention gradient") {
  std::mt19937_64 rng(13);
  Tensor q = randn({2, 7, 3}, rng, 1.0, true), k = randn({2, 7, 3}, rng, 1.0, true),
         v = randn({2, 7, 4}, rng, 1.0, true);
  const Tensor r = randn({2, 7, 4}, rng);
  auto f = [&] { return ops::sum(ops::mul(fast_attention(q, k, v), r)); };
  CHECK(grad_check(f, {q, k, v}).rel_error < 1e-6);
}

TEST_CASE("position layout round trip") {
  std::mt19937_64 rng(14);
  const Tensor x = randn({2, 3, 4, 5}, rng);
  const Tensor rows = to_positions(x);
  CHECK(rows.shape() == Shape{2, 20, 3});
  CHECK(rows.data()[(1 * 20 + 7) * 3 + 2] == x.data()[((1 * 3 + 2) * 4 + 1) * 5 + 2]);
  CHECK(max_abs_diff(from_positions(rows, 4, 5).data(), x.data()) == 0.0);
}

TEST_CASE("segmentation path output shapes and scopes") {
  const ModelConfig c = mtnet::testing::micro_config();
  ParameterStore store;
  Rng rng(1);
  Backbone bb(store, c.backbone, rng);
  SegPath seg(store, c.seg, c.backbone, rng);
  trace::FlopTracer t(true);
  const SegOutput out = segment(bb, seg, Tensor({2, 3, 64, 96}));
  CHECK(out.logits.shape() == Shape{2, 3, 64, 96});
  CHECK(out.logits_s4.shape() == Shape{2, 3, 16, 24});
  const auto scopes = t.by_scope(2);
  CHECK(scopes.count("seg_path/spp") == 1);
  CHECK(scopes.count("seg_path/up2") == 1);
  CHECK(t.by_scope(3).count("seg_path/up0/fast_attention") == 1);
}

TEST_CASE("attention levels can be switched off") {
  ModelConfig c = mtnet::testing::micro_config();
  c.seg.attention_levels = {false, true, false};
  ParameterStore store;
  Rng rng(1);
  Backbone bb(store, c.backbone, rng);
  SegPath seg(store, c.seg, c.backbone, rng);
  CHECK_FALSE(seg.lateral(0).attention());
  CHECK(seg.lateral(1).attention());
  trace::FlopTracer t(true);
  segment(bb, seg, Tensor({1, 3, 64, 64}));
  const auto scopes = t.by_scope(3);
  CHECK(scopes.count("seg_path/up0/fast_attention") == 0);
  CHECK(scopes.count("seg_path/up1/fast_attention") == 1);
}

TEST_CASE("segmentation config validation") {
  SegPathConfig c;
  c.spp_grids = {2, 1};
  CHECK_THROWS_AS(c.validate(), Error);
  c.spp_grids = {};
  CHECK_THROWS_AS(c.validate(), Error);
  c.spp_grids = {1, 2};
  c.num_classes = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("spp grid larger than the feature map is reported") {
  ModelConfig c = mtnet::testing::micro_config();
  c.seg.spp_grids = {1, 4};
  ParameterStore store;
  Rng rng(1);
  Backbone bb(store, c.backbone, rng);
  SegPath seg(store, c.seg, c.backbone, rng);
  trace::FlopTracer t(true);
  CHECK_THROWS_AS(segment(bb, seg, Tensor({1, 3, 64, 64})), Error);
}
