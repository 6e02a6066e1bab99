// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "error.hpp"
#include "strings.hpp"
#include "trace.hpp"

namespace mtnet {

namespace {

std::string module_of_param(const std::string& name) {
  const std::string head = name.substr(0, name.find('.'));
  if (head == "seg") return "seg_path";
  if (head == "recog") return "recog_path";
  return head;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

int64_t count_params(const JointModel& model) { return model.store().parameter_count(); }

double count_flops(const JointModel& model, int64_t h, int64_t w, std::vector<ModuleCost>* breakdown) {
  NoGradGuard no_grad;
  trace::FlopTracer tracer(true);
  const Tensor input({1, model.config().backbone.input_channels, h, w});
  model.forward(input);
  if (!tracer.untraced().empty()) {
    fail(ErrorCode::Untraceable, "ops without a FLOP formula: " + join(tracer.untraced(), ", "));
  }
  if (breakdown) {
    breakdown->clear();
    std::map<std::string, ModuleCost> modules;
    for (const auto& [scope, flops] : tracer.by_scope(1)) {
      modules[scope].name = scope;
      modules[scope].flops += flops;
    }
    for (const auto& p : model.store().parameters()) {
      const auto m = module_of_param(p.name);
      modules[m].name = m;
      modules[m].params += p.tensor.numel();
    }
    for (const char* name : {"backbone", "seg_path", "recog_path"}) {
      if (modules.count(name)) {
        breakdown->push_back(modules[name]);
        modules.erase(name);
      }
    }
    for (auto& [_, cost] : modules) breakdown->push_back(cost);
  }
  return tracer.total();
}

std::string device_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      cpu = trim(line.substr(line.find(':') + 1));
      break;
    }
  }
  return cpu + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) +
         " hardware threads, 1 used, float64";
}

FpsResult measure_fps(const JointModel& model, int64_t h, int64_t w, int warmup, int iters) {
  if (iters < 1) fail(ErrorCode::InvalidArgument, "measure_fps: iters must be at least 1");
  auto& m = const_cast<JointModel&>(model);
  const bool was_training = m.training();
  m.set_training(false);
  NoGradGuard no_grad;
  Tensor input({1, model.config().backbone.input_channels, h, w});
  Rng rng(7);
  std::normal_distribution<double> dist;
  for (auto& v : input.data()) v = dist(rng);
  for (int i = 0; i < warmup; ++i) model.forward(input);
  FpsResult r;
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.forward(input);
    r.latencies_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  m.set_training(was_training);
  std::vector<double> sorted = r.latencies_s;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  r.median_latency_s = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.fps = 1.0 / r.median_latency_s;
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double var = 0;
  for (double x : sorted) var += (x - mean) * (x - mean);
  r.cv = n > 1 ? std::sqrt(var / (n - 1)) / mean : 0.0;
  r.device = device_descriptor();
  return r;
}

ComplexityReport profile_model(const std::string& name, const JointModel& model, int64_t h,
                               int64_t w, int fps_iters, int fps_warmup) {
  ComplexityReport r;
  r.name = name;
  r.input_h = h;
  r.input_w = w;
  r.flops = count_flops(model, h, w, &r.breakdown);
  r.params = count_params(model);
  if (fps_iters > 0) r.fps = measure_fps(model, h, w, fps_warmup, fps_iters);
  return r;
}

std::string ComplexityReport::to_text() const {
  std::string out;
  out += "config: " + name + "\n";
  out += "input: 1x" + std::to_string(input_h) + "x" + std::to_string(input_w) + "\n";
  out += "convention: multiply-accumulate = 2 FLOPs\n";
  out += "gflops: " + fmt("%.4f", gflops()) + "\n";
  out += "params_m: " + fmt("%.4f", params_m()) + "\n";
  for (const auto& m : breakdown) {
    out += "  " + m.name + ": gflops " + fmt("%.4f", m.flops / 1e9) + ", params_m " +
           fmt("%.4f", m.params / 1e6) + "\n";
  }
  if (fps) {
    out += "fps: " + fmt("%.3f", fps->fps) + " (median of " + std::to_string(fps->latencies_s.size()) +
           ", cv " + fmt("%.3f", fps->cv) + ")\n";
    out += "device: " + fps->device + "\n";
  }
  return out;
}

nlohmann::json ComplexityReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["input"] = {input_h, input_w};
  j["convention"] = "mac=2flops";
  j["flops"] = flops;
  j["gflops"] = gflops();
  j["params"] = params;
  j["params_m"] = params_m();
  j["breakdown"] = nlohmann::json::array();
  for (const auto& m : breakdown) {
    j["breakdown"].push_back({{"name", m.name}, {"flops", m.flops}, {"params", m.params}});
  }
  if (fps) {
    j["fps"] = {{"fps", fps->fps},
                {"median_latency_s", fps->median_latency_s},
                {"cv", fps->cv},
                {"device", fps->device}};
  }
  return j;
}

std::string comparison_table(const std::vector<ComplexityReport>& reports) {
  size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.name.size());
  auto pad = [&](std::string s) {
    s.resize(width, ' ');
    return s;
  };
  std::string out = "# multiply-accumulate = 2 FLOPs\n";
  out += pad("config") + "  input      GFLOPs     Params(M)  FPS\n";
  for (const auto& r : reports) {
    std::string input = std::to_string(r.input_h) + "x" + std::to_string(r.input_w);
    input.resize(9, ' ');
    std::string g = fmt("%.4f", r.gflops()), p = fmt("%.4f", r.params_m());
    g.resize(10, ' ');
    p.resize(10, ' ');
    out += pad(r.name) + "  " + input + "  " + g + " " + p + " " + (r.fps ? fmt("%.2f", r.fps->fps) : "-") + "\n";
  }
  return out;
}

}  // namespace mtnet
