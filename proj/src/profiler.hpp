// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "model.hpp"

namespace mtnet {

struct ModuleCost {
  std::string name;
  double flops = 0.0;
  int64_t params = 0;
};

struct FpsResult {
  double fps = 0.0;
  double median_latency_s = 0.0;
  /// Coefficient of variation of the per-iteration latencies.
  double cv = 0.0;
  std::vector<double> latencies_s;
  std::string device;
};

struct ComplexityReport {
  std::string name;
  int64_t input_h = 0, input_w = 0;
  double flops = 0.0;
  int64_t params = 0;
  /// backbone, seg_path, recog_path; totals equal the sums of these.
  std::vector<ModuleCost> breakdown;
  std::optional<FpsResult> fps;

  double gflops() const { return flops / 1e9; }
  double params_m() const { return static_cast<double>(params) / 1e6; }
  std::string to_text() const;
  nlohmann::json to_json() const;
};

/// Trainable scalars.
int64_t count_params(const JointModel& model);
/// Analytic FLOPs of one forward pass on a 1 x C x h x w input, MAC = 2
/// FLOPs. The pass is shape-only, so large configs cost no arithmetic.
/// Ops without a formula raise an Untraceable error naming them.
double count_flops(const JointModel& model, int64_t h, int64_t w,
                   std::vector<ModuleCost>* breakdown = nullptr);
/// Median single-image forward latency over `iters` timed runs, inverted.
FpsResult measure_fps(const JointModel& model, int64_t h, int64_t w, int warmup, int iters);
std::string device_descriptor();

ComplexityReport profile_model(const std::string& name, const JointModel& model, int64_t h,
                               int64_t w, int fps_iters = 0, int fps_warmup = 1);
/// One row per report, in the given order.
std::string comparison_table(const std::vector<ComplexityReport>& reports);

}  // namespace mtnet
