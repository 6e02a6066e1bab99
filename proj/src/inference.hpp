// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "image_io.hpp"
#include "model.hpp"

namespace mtnet {

inline constexpr int kResultSchemaVersion = 1;

/// Label colours: bits 0, 1, 2 of the label go to the top bits of R, G and
/// B respectively, then bits 3, 4, 5 to the next bits, and so on. Labels
/// below 2^24 map to distinct colours; 0 is black.
std::array<uint8_t, 3> palette_colour(int32_t label);
/// Palette-exact rendering of a label map.
RgbImage render_overlay(std::span<const int32_t> labels, int64_t height, int64_t width);
/// Inverse of render_overlay.
std::vector<int32_t> decode_overlay(const RgbImage& overlay);
/// 50/50 blend of the image and the palette colours, for viewing.
RgbImage render_blend(const RgbImage& image, std::span<const int32_t> labels);

struct NearbyObject {
  int32_t cls = 0;
  std::string name;
  /// Near pixels of this class over all image pixels.
  double fraction = 0.0;
  double min_depth = 0.0;
};

/// Classes with at least `min_fraction` of the image at valid depth
/// (0 < d <= threshold_m), sorted by min depth then class index. Depth 0
/// marks missing readings and is skipped.
std::vector<NearbyObject> nearby_objects(std::span<const int32_t> seg, std::span<const double> depth,
                                         int64_t height, int64_t width, double threshold_m = 2.0,
                                         double min_fraction = 0.005,
                                         const std::vector<std::string>& class_names = {});

struct Prediction {
  int64_t height = 0, width = 0;
  std::vector<int32_t> seg;
  std::vector<double> scene_log_probs;
  int32_t top_scene = 0;
  CamMap cam;
};

/// Single-image forward pass in inference mode. `rgb` is [3, H, W] in
/// [0, 1]; sides that are not multiples of 32 are resized for the network
/// and the segmentation scores resized back.
Prediction predict(const JointModel& model, const std::vector<float>& rgb, int64_t height, int64_t width);

struct InferOptions {
  std::string image_path;
  std::optional<std::string> depth_path;
  std::string out_dir;
  double threshold_m = 2.0;
  double min_fraction = 0.005;
  int top_k = 5;
  std::vector<std::string> seg_class_names;
  std::vector<std::string> scene_class_names;
};

/// Writes overlay.ppm, overlay_blend.ppm, cam.pgm, cam_raw.txt and
/// result.json into out_dir and returns the result record.
nlohmann::json run_inference(const JointModel& model, const InferOptions& options);

}  // namespace mtnet
