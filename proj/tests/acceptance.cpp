// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "datasets.hpp"
#include "fixtures.hpp"
#include "helpers.hpp"
#include "inference.hpp"
#include "metrics.hpp"
#include "ops.hpp"
#include "oracles.hpp"
#include "profiler.hpp"
#include "recog_path.hpp"
#include "seg_path.hpp"
#include "trace.hpp"
#include "training.hpp"

using namespace mtnet;
using mtnet::testing::grad_check;
using mtnet::testing::randn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 ---------------------------------------------------------------------------
Outcome fast_attention_vs_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int64_t> dn(1, 4096), dq(1, 64), dc(1, 128);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const int instances = 100;
  for (int i = 0; i < instances; ++i) {
    const int64_t n = i == 0 ? 4096 : dn(rng);
    const int64_t cq = i == 0 ? 64 : dq(rng);
    const int64_t c = i == 0 ? 128 : dc(rng);
    const Tensor q = randn({n, cq}, rng), k = randn({n, cq}, rng), v = randn({n, c}, rng);
    worst = std::max(worst, mtnet::testing::max_abs_diff(fast_attention(q, k, v).data(),
                                                         fast_attention_oracle(q, k, v).data()));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 30.0,
          std::to_string(instances) + " instances, max abs error " + fmt("%.3g", worst) + ", " + fmt("%.1f", secs) + " s"};
}

// 2 ---------------------------------------------------------------------------
double attention_flops(int64_t n, int64_t cq, int64_t c) {
  trace::FlopTracer t(true);
  fast_attention(Tensor({n, cq}), Tensor({n, cq}), Tensor({n, c}));
  return t.total();
}

Outcome flop_scaling() {
  const double rn = attention_flops(2048, 32, 32) / attention_flops(1024, 32, 32);
  const double rc = attention_flops(1024, 64, 64) / attention_flops(1024, 32, 32);
  const bool ok = std::abs(rn - 2.0) <= 0.2 && std::abs(rc - 4.0) <= 0.4;
  return {ok, "n 1024->2048 ratio " + fmt("%.4f", rn) + ", c=c' 32->64 ratio " + fmt("%.4f", rc)};
}

// 3 ---------------------------------------------------------------------------
std::vector<Tensor> params_of(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.parameters()) out.push_back(p.tensor);
  return out;
}

Outcome gradients() {
  std::mt19937_64 rng(103);
  std::map<std::string, double> err;

  {
    Tensor q = randn({2, 9, 4}, rng, 1.0, true), k = randn({2, 9, 4}, rng, 1.0, true),
           v = randn({2, 9, 5}, rng, 1.0, true);
    const Tensor r = randn({2, 9, 5}, rng);
    err["fast_attention"] =
        grad_check([&] { return ops::sum(ops::mul(fast_attention(q, k, v), r)); }, {q, k, v}).rel_error;
  }
  {
    ParameterStore store;
    Rng prng(1);
    ChannelAttention ca(store, "ca", 6, 2, prng);
    Tensor x = randn({2, 6, 4, 4}, rng, 1.0, true);
    const Tensor r = randn({2, 6, 4, 4}, rng);
    auto inputs = params_of(store);
    inputs.push_back(x);
    err["channel_attention"] =
        grad_check([&] { return ops::sum(ops::mul(ca(x).output, r)); }, inputs).rel_error;
  }
  {
    ParameterStore store;
    Rng prng(2);
    GatedFusion gf(store, "gf", 4, 5, 6, prng);
    Tensor fm = randn({2, 4, 3, 3}, rng, 1.0, true), fi = randn({2, 5, 3, 3}, rng, 1.0, true);
    const Tensor r = randn({2, 6, 3, 3}, rng);
    auto inputs = params_of(store);
    inputs.push_back(fm);
    inputs.push_back(fi);
    err["gated_fusion"] = grad_check([&] { return ops::sum(ops::mul(gf(fm, fi).f_a, r)); }, inputs).rel_error;
  }
  {
    ParameterStore store;
    Rng prng(3);
    SceneClassifier cls(store, "cls", 5, 7, prng);
    Tensor fa = randn({3, 5, 2, 2}, rng, 1.0, true);
    const Tensor r = randn({3, 7}, rng);
    auto inputs = params_of(store);
    inputs.push_back(fa);
    err["classify"] = grad_check([&] { return ops::sum(ops::mul(cls(fa).y, r)); }, inputs).rel_error;
  }
  {
    Tensor logits = randn({2, 4, 3, 5}, rng, 2.0, true);
    std::vector<int32_t> labels(30);
    for (size_t i = 0; i < labels.size(); ++i) labels[i] = i % 7 == 0 ? 255 : static_cast<int32_t>(i % 4);
    err["seg_loss"] = grad_check([&] { return seg_loss(logits, labels, 255); }, {logits}).rel_error;
  }
  {
    Tensor f = randn({4, 6}, rng, 2.0, true);
    const std::vector<int32_t> labels{5, 0, 2, 2};
    err["scene_loss"] = grad_check([&] { return scene_loss(ops::log_softmax(f), labels); }, {f}).rel_error;
  }
  {
    JointModel model(mtnet::testing::micro_task_config());
    model.set_training(true);
    // Zero-initialized biases leave exact logit ties where features are dead,
    // and the argmax message jumps there. Random biases give a generic point.
    std::normal_distribution<double> nb(0.0, 0.1);
    for (const auto& p : model.store().parameters()) {
      if (p.name.ends_with(".bias")) {
        for (double& v : Tensor(p.tensor).data()) v = nb(rng);
      }
    }
    const Tensor image = randn({2, 3, 64, 64}, rng);
    std::vector<int32_t> seg_labels(2 * 64 * 64);
    for (size_t i = 0; i < seg_labels.size(); ++i) seg_labels[i] = static_cast<int32_t>((i / 7) % 5);
    const std::vector<int32_t> scene_labels{1, 4};
    auto f = [&] {
      const auto out = model.forward(image);
      return joint_loss(seg_loss(out.seg.logits, seg_labels, -1), scene_loss(out.recog.scene.y, scene_labels),
                        LossWeights{});
    };
    err["joint_model"] = grad_check(f, params_of(model.store())).rel_error;
  }

  bool ok = true;
  std::string detail;
  for (const auto& [name, e] : err) {
    ok = ok && e < 1e-4;
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt("%.2g", e);
  }
  return {ok, detail};
}

// 4 ---------------------------------------------------------------------------
Outcome metric_oracles() {
  std::mt19937_64 rng(104);
  int mismatches = 0, instances = 0, monotone_bad = 0, perm_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = std::uniform_int_distribution<int>(1, 8)(rng);
    const int n = std::uniform_int_distribution<int>(1, 64)(rng);
    std::uniform_int_distribution<int32_t> dl(0, k - 1), dlevel(0, 3);
    std::vector<int32_t> pred(n), truth(n), scene_labels(n);
    std::vector<double> scores(static_cast<size_t>(n * k));
    for (int i = 0; i < n; ++i) {
      pred[i] = dl(rng);
      truth[i] = rng() % 6 == 0 ? 255 : dl(rng);
      scene_labels[i] = dl(rng);
    }
    for (auto& s : scores) s = dlevel(rng);
    ++instances;

    SegConfusion conf(k);
    conf.accumulate(pred, truth, 255);
    if (conf.total() > 0) {
      mismatches += std::abs(miou(conf) - oracle::miou(pred, truth, k, 255)) > 1e-12;
      mismatches += std::abs(pixel_accuracy(conf) - oracle::pixel_accuracy(pred, truth, 255)) > 1e-12;
    }
    double prev = 0.0;
    for (int kk = 1; kk <= k; ++kk) {
      const double a = topk_accuracy(scores, k, scene_labels, kk);
      mismatches += std::abs(a - oracle::topk(scores, k, scene_labels, kk)) > 1e-12;
      monotone_bad += a < prev;
      prev = a;
    }
    mismatches += std::abs(mean_class_accuracy(scores, k, scene_labels) -
                           oracle::mean_class_accuracy(scores, k, scene_labels)) > 1e-12;

    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int32_t> pl(n);
    std::vector<double> ps(scores.size());
    for (int i = 0; i < n; ++i) {
      pl[i] = scene_labels[perm[i]];
      std::copy_n(scores.begin() + perm[i] * k, k, ps.begin() + i * k);
    }
    for (int kk = 1; kk <= k; ++kk) perm_bad += topk_accuracy(scores, k, scene_labels, kk) != topk_accuracy(ps, k, pl, kk);
    perm_bad += std::abs(mean_class_accuracy(scores, k, scene_labels) - mean_class_accuracy(ps, k, pl)) > 1e-12;
  }
  return {mismatches == 0 && monotone_bad == 0 && perm_bad == 0,
          std::to_string(instances) + " instances, " + std::to_string(mismatches) + " oracle mismatches, " +
              std::to_string(monotone_bad) + " monotonicity violations, " + std::to_string(perm_bad) +
              " permutation violations"};
}

// 5 ---------------------------------------------------------------------------
Outcome loss_properties() {
  double worst_lnk = 0.0;
  for (int k : {2, 3, 10, 150, 1055}) {
    const Tensor seg({1, k, 2, 2}, 0.3);
    worst_lnk = std::max(worst_lnk, std::abs(seg_loss(seg, std::vector<int32_t>(4, k - 1), -1).item() - std::log(k)));
    const Tensor y = ops::log_softmax(Tensor({2, k}, 5.0));
    worst_lnk = std::max(worst_lnk, std::abs(scene_loss(y, std::vector<int32_t>{0, k - 1}).item() - std::log(k)));
  }
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  bool linear = true;
  for (int i = 0; i < 1000; ++i) {
    const double l1 = u(rng), l2 = u(rng);
    const LossWeights w{std::abs(u(rng)) + 0.1, std::abs(u(rng))};
    linear = linear && joint_loss(l1, l2, w) == w.lambda1 * l1 + w.lambda2 * l2 &&
             joint_loss(Tensor({1}, l1), Tensor({1}, l2), w).item() == w.lambda1 * l1 + w.lambda2 * l2;
  }
  const Tensor big({1, 3, 1, 2}, {1e4, -1e4, -1e4, 1e4, 0.0, 0.0});
  const double lb = seg_loss(big, std::vector<int32_t>{1, 1}, -1).item();
  const double ls = scene_loss(ops::log_softmax(Tensor({2, 2}, {1e4, -1e4, -1e4, 1e4})), std::vector<int32_t>{0, 0}).item();
  const bool finite = std::isfinite(lb) && std::isfinite(ls) && std::abs(lb - 1e4) < 1e-6 && std::abs(ls - 1e4) < 1e-6;
  return {worst_lnk <= 1e-6 && linear && finite,
          "max |L - ln K| " + fmt("%.2g", worst_lnk) + ", joint linearity " + (linear ? "exact" : "broken") +
              ", |logits| = 1e4 losses " + fmt("%.6g", lb) + " / " + fmt("%.6g", ls)};
}

// 6 ---------------------------------------------------------------------------
Outcome cam_identity() {
  const JointModel model(preset("toy").model);
  std::mt19937_64 rng(106);
  double worst = 0.0;
  NoGradGuard ng;
  for (int i = 0; i < 20; ++i) {
    const auto out = model.forward(randn({1, 3, 64, 64}, rng));
    const auto& cls = model.recog().classifier();
    for (int64_t k = 0; k < cls.fc.weight.dim(0); ++k) {
      const CamMap cam = class_activation_map(out.recog.fusion.f_a, cls, k, 64, 64);
      double mean = 0.0;
      for (double v : cam.raw) mean += v;
      mean /= static_cast<double>(cam.raw.size());
      worst = std::max(worst, std::abs(mean + cls.fc.bias.data()[k] - out.recog.scene.f.data()[k]));
    }
  }
  return {worst <= 1e-5, "20 inputs, every class, max |mean(cam) + b - f| " + fmt("%.2g", worst)};
}

// 7 ---------------------------------------------------------------------------
double mean_gate(const JointModel& model, const std::vector<Sample>& data) {
  NoGradGuard ng;
  auto& m = const_cast<JointModel&>(model);
  m.set_training(false);
  double sum = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < data.size(); i += 16) {
    std::vector<const Sample*> batch;
    for (size_t j = i; j < std::min(data.size(), i + 16); ++j) batch.push_back(&data[j]);
    const auto out = model.forward(to_input_tensor(batch));
    for (double g : out.recog.fusion.f_ma.data()) sum += g;
    count += out.recog.fusion.f_ma.numel();
  }
  return sum / static_cast<double>(count);
}

Outcome synthetic_end_to_end() {
  const std::clock_t c0 = std::clock();
  const Settings s = preset("toy");
  const SyntheticConfig sc = resolved_synth(s);
  std::vector<Sample> train, val;
  for (auto& x : generate_split(sc, 0)) train.push_back(std::move(x.sample));
  for (auto& x : generate_split(sc, 1)) val.push_back(std::move(x.sample));

  JointModel model(s.model);
  fit(model, SampleSource::from_vector(train), SampleSource::from_vector(val), s.train, s.loss);
  const EvalResult r = evaluate(model, SampleSource::from_vector(val), s.train.ignore_index);
  const double g = mean_gate(model, val);
  const EvalResult ablated =
      evaluate(model, SampleSource::from_vector(val), s.train.ignore_index, 8, {GateOverride::Kind::Constant, g});
  const double cpu_min = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC / 60.0;
  const double drop = r.metrics.top(1) - ablated.metrics.top(1);
  const bool ok = cpu_min <= 10.0 && r.metrics.top(1) >= 0.90 && r.metrics.miou >= 0.70 && drop >= 0.05;
  return {ok, std::to_string(train.size()) + "/" + std::to_string(val.size()) + " samples, " +
                  std::to_string(s.train.epochs) + " epochs: Top@1 " + fmt("%.3f", r.metrics.top(1)) + ", mIoU " +
                  fmt("%.3f", r.metrics.miou) + ", constant gate " + fmt("%.3f", g) + " Top@1 " +
                  fmt("%.3f", ablated.metrics.top(1)) + " (drop " + fmt("%.3f", drop) + "), " +
                  fmt("%.2f", cpu_min) + " CPU-min"};
}

// 8 ---------------------------------------------------------------------------
Outcome checkpoint_selection() {
  std::mt19937_64 rng(108);
  int wrong = 0, logs = 0, with_ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int epochs = std::uniform_int_distribution<int>(1, 12)(rng);
    TrainingLog log;
    // Quarter steps keep sums exact so ties are real ties.
    std::uniform_int_distribution<int> q(0, 4);
    for (int e = 0; e < epochs; ++e) {
      EpochRecord r;
      r.epoch = e;
      r.metrics.miou = q(rng) / 4.0;
      r.metrics.mca = q(rng) / 4.0;
      log.records.push_back(r);
    }
    int best = 0;
    double best_score = -1;
    std::set<double> seen;
    bool tie = false;
    for (const auto& r : log.records) {
      const double sc = r.metrics.miou + r.metrics.mca;
      tie = tie || seen.count(sc);
      seen.insert(sc);
      if (sc > best_score) {
        best_score = sc;
        best = r.epoch;
      }
    }
    with_ties += tie;
    wrong += select_checkpoint(log) != best;
    ++logs;
  }
  return {wrong == 0, std::to_string(logs) + " random logs (" + std::to_string(with_ties) + " with ties), " +
                          std::to_string(wrong) + " wrong selections"};
}

// 9 ---------------------------------------------------------------------------
Outcome complexity_ordering() {
  std::map<std::string, ComplexityReport> r;
  for (const char* name : {"r18-base", "r18", "r18-fa-wide", "r101"}) {
    const JointModel m(preset(name).model);
    r[name] = profile_model(name, m, 384, 384);
  }
  auto lt = [&](const char* a, const char* b) { return r[a].flops < r[b].flops && r[a].params < r[b].params; };
  const bool ok = lt("r18-base", "r18") && lt("r18-base", "r18-fa-wide") && lt("r18", "r101");
  std::string detail;
  for (const char* name : {"r18-base", "r18", "r18-fa-wide", "r101"}) {
    detail += (detail.empty() ? "" : ", ") + std::string(name) + " " + fmt("%.2f", r[name].gflops()) + " GFLOPs/" +
              fmt("%.2f", r[name].params_m()) + " M";
  }
  return {ok, detail + " at 384x384"};
}

// 10 --------------------------------------------------------------------------
Outcome non_reproducibility_statement() {
  std::ifstream in(std::filesystem::path(MTNET_SOURCE_DIR) / "README.md");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  bool ok = !text.empty();
  for (const char* needle : {"28.60", "56.20", "11.49", "not reproduced"}) ok = ok && text.find(needle) != std::string::npos;
  return {ok, ok ? "README states that the reported ADE20k and Jetson figures are not reproduced"
                 : "README lacks the non-reproducibility statement"};
}

// 11 --------------------------------------------------------------------------
Outcome nearby_feedback() {
  SyntheticConfig sc;
  sc.seed = 111;
  sc.train_count = 50;
  sc.finalize();
  int scenes = 0, disagreements = 0, monotone_bad = 0, leaks = 0, near_objects = 0;
  for (const auto& s : generate_split(sc, 0)) {
    const auto& smp = s.sample;
    const auto& depth = *smp.depth;
    ++scenes;
    // Analytic answer: every shape within 2 m with at least one valid pixel.
    std::map<int32_t, double> expect;
    for (const auto& sh : s.shapes) {
      if (sh.depth > 2.0) continue;
      bool valid = false;
      for (size_t p = 0; p < depth.size(); ++p) valid = valid || (smp.seg_label[p] == sh.cls && depth[p] > 0);
      if (valid) expect[sh.cls] = sh.depth;
    }
    const auto got = nearby_objects(smp.seg_label, depth, smp.height, smp.width, 2.0, 0.0);
    std::map<int32_t, double> got_map;
    for (const auto& o : got) {
      got_map[o.cls] = o.min_depth;
      leaks += o.min_depth <= 0.0 || o.min_depth > 2.0;
    }
    disagreements += got_map != expect;
    near_objects += static_cast<int>(expect.size());

    std::set<int32_t> prev;
    for (double t = 0.0; t <= 9.0; t += 0.25) {
      std::set<int32_t> cur;
      for (const auto& o : nearby_objects(smp.seg_label, depth, smp.height, smp.width, t, 0.001)) cur.insert(o.cls);
      monotone_bad += !std::includes(cur.begin(), cur.end(), prev.begin(), prev.end());
      prev = cur;
    }
  }
  return {disagreements == 0 && monotone_bad == 0 && leaks == 0 && near_objects > 0,
          std::to_string(scenes) + " scenes, " + std::to_string(near_objects) + " near objects, " +
              std::to_string(disagreements) + " disagreements, " + std::to_string(monotone_bad) +
              " monotonicity violations, " + std::to_string(leaks) + " out-of-range depths"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fast attention equals affinity-first oracle", fast_attention_vs_oracle},
      {"fast attention cost scaling", flop_scaling},
      {"analytic gradients match finite differences", gradients},
      {"metrics equal brute-force oracles", metric_oracles},
      {"loss properties", loss_properties},
      {"class activation map identity", cam_identity},
      {"synthetic end-to-end training and gate ablation", synthetic_end_to_end},
      {"checkpoint selection", checkpoint_selection},
      {"complexity ordering", complexity_ordering},
      {"non-reproducibility statement", non_reproducibility_statement},
      {"nearby-object feedback", nearby_feedback},
  };
  // Optional criterion numbers on the command line run a subset.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
