// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "inference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "datasets.hpp"
#include "error.hpp"
#include "ops.hpp"

namespace fs = std::filesystem;

namespace mtnet {

std::array<uint8_t, 3> palette_colour(int32_t label) {
  std::array<uint8_t, 3> rgb{0, 0, 0};
  uint32_t c = static_cast<uint32_t>(label);
  for (int j = 0; j < 8; ++j) {
    for (int ch = 0; ch < 3; ++ch) rgb[ch] |= static_cast<uint8_t>(((c >> ch) & 1u) << (7 - j));
    c >>= 3;
  }
  return rgb;
}

RgbImage render_overlay(std::span<const int32_t> labels, int64_t height, int64_t width) {
  if (static_cast<int64_t>(labels.size()) != height * width) {
    fail(ErrorCode::Shape, "overlay: label count does not match image size");
  }
  RgbImage img{width, height, std::vector<uint8_t>(labels.size() * 3)};
  for (size_t p = 0; p < labels.size(); ++p) {
    const auto c = palette_colour(labels[p]);
    std::copy(c.begin(), c.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * p));
  }
  return img;
}

std::vector<int32_t> decode_overlay(const RgbImage& overlay) {
  std::vector<int32_t> out(static_cast<size_t>(overlay.width * overlay.height));
  for (size_t p = 0; p < out.size(); ++p) {
    uint32_t label = 0;
    for (int j = 0; j < 8; ++j) {
      for (int ch = 0; ch < 3; ++ch) {
        label |= ((overlay.pixels[3 * p + ch] >> (7 - j)) & 1u) << (3 * j + ch);
      }
    }
    out[p] = static_cast<int32_t>(label);
  }
  return out;
}

RgbImage render_blend(const RgbImage& image, std::span<const int32_t> labels) {
  RgbImage out = render_overlay(labels, image.height, image.width);
  for (size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<uint8_t>((out.pixels[i] + image.pixels[i] + 1) / 2);
  }
  return out;
}

std::vector<NearbyObject> nearby_objects(std::span<const int32_t> seg, std::span<const double> depth,
                                         int64_t height, int64_t width, double threshold_m,
                                         double min_fraction,
                                         const std::vector<std::string>& class_names) {
  const auto n = static_cast<size_t>(height * width);
  if (seg.size() != n || depth.size() != n) {
    fail(ErrorCode::Shape, "nearby_objects: segmentation (" + std::to_string(seg.size()) +
                               " px) and depth (" + std::to_string(depth.size()) +
                               " px) are not aligned to " + std::to_string(height) + "x" +
                               std::to_string(width));
  }
  if (!(threshold_m >= 0)) fail(ErrorCode::InvalidArgument, "nearby_objects: threshold must be >= 0");
  std::map<int32_t, std::pair<int64_t, double>> near;  // class -> (pixels, min depth)
  for (size_t p = 0; p < n; ++p) {
    const double d = depth[p];
    if (!(d > 0.0) || d > threshold_m) continue;
    auto [it, inserted] = near.try_emplace(seg[p], 0, d);
    ++it->second.first;
    it->second.second = std::min(it->second.second, d);
  }
  std::vector<NearbyObject> out;
  for (const auto& [cls, stats] : near) {
    const double fraction = static_cast<double>(stats.first) / static_cast<double>(n);
    if (fraction < min_fraction) continue;
    NearbyObject o;
    o.cls = cls;
    o.name = cls >= 0 && static_cast<size_t>(cls) < class_names.size() ? class_names[cls]
                                                                       : "class" + std::to_string(cls);
    o.fraction = fraction;
    o.min_depth = stats.second;
    out.push_back(std::move(o));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const NearbyObject& a, const NearbyObject& b) { return a.min_depth < b.min_depth; });
  return out;
}

Prediction predict(const JointModel& model, const std::vector<float>& rgb, int64_t height, int64_t width) {
  if (static_cast<int64_t>(rgb.size()) != 3 * height * width) {
    fail(ErrorCode::Shape, "predict: expected 3x" + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  auto& m = const_cast<JointModel&>(model);
  const bool was_training = m.training();
  m.set_training(false);
  NoGradGuard no_grad;
  Tensor input = to_input_tensor(rgb, height, width);
  const int64_t th = std::max<int64_t>(32, (height + 16) / 32 * 32);
  const int64_t tw = std::max<int64_t>(32, (width + 16) / 32 * 32);
  if (th != height || tw != width) input = ops::upsample_bilinear(input, th, tw);
  const auto out = model.forward(input);
  m.set_training(was_training);

  Tensor logits = out.seg.logits;
  if (th != height || tw != width) logits = ops::upsample_bilinear(logits, height, width);
  Prediction p;
  p.height = height;
  p.width = width;
  const int64_t k = logits.dim(1), hw = height * width;
  const auto v = logits.data();
  p.seg.resize(static_cast<size_t>(hw));
  for (int64_t i = 0; i < hw; ++i) {
    int32_t best = 0;
    for (int64_t c = 1; c < k; ++c) {
      if (v[c * hw + i] > v[best * hw + i]) best = static_cast<int32_t>(c);
    }
    p.seg[i] = best;
  }
  const auto y = out.recog.scene.y.data();
  p.scene_log_probs.assign(y.begin(), y.end());
  p.top_scene = static_cast<int32_t>(std::max_element(y.begin(), y.end()) - y.begin());
  p.cam = class_activation_map(out.recog.fusion.f_a, model.recog().classifier(), p.top_scene, height, width);
  return p;
}

nlohmann::json run_inference(const JointModel& model, const InferOptions& options) {
  const RgbImage image = read_ppm(options.image_path);
  const int64_t h = image.height, w = image.width, hw = h * w;
  std::optional<std::vector<double>> depth;
  if (options.depth_path) {
    const GrayImage d = read_pgm(*options.depth_path);
    if (d.width != w || d.height != h) {
      fail(ErrorCode::Shape, *options.depth_path + ": depth map " + std::to_string(d.width) + "x" +
                                 std::to_string(d.height) + " is not aligned with image " +
                                 std::to_string(w) + "x" + std::to_string(h));
    }
    depth = std::vector<double>(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) (*depth)[i] = std::min(kMaxDepthMeters, d.pixels[i] / 1000.0);
  }

  std::vector<float> rgb(static_cast<size_t>(3 * hw));
  for (int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) rgb[c * hw + i] = static_cast<float>(image.pixels[3 * i + c] / 255.0);
  }
  const Prediction p = predict(model, rgb, h, w);

  const fs::path dir(options.out_dir);
  fs::create_directories(dir);
  write_ppm((dir / "overlay.ppm").string(), render_overlay(p.seg, h, w));
  write_ppm((dir / "overlay_blend.ppm").string(), render_blend(image, p.seg));
  GrayImage cam_img{w, h, 255, std::vector<uint16_t>(static_cast<size_t>(hw))};
  for (int64_t i = 0; i < hw; ++i) cam_img.pixels[i] = static_cast<uint16_t>(std::lround(p.cam.rendered[i] * 255.0));
  write_pgm((dir / "cam.pgm").string(), cam_img);
  {
    std::ofstream raw(dir / "cam_raw.txt", std::ios::trunc);
    if (!raw) fail(ErrorCode::Io, "cannot write cam_raw.txt in " + options.out_dir);
    raw.precision(17);
    raw << p.cam.height << ' ' << p.cam.width << '\n';
    for (int64_t y = 0; y < p.cam.height; ++y) {
      for (int64_t x = 0; x < p.cam.width; ++x) raw << (x ? " " : "") << p.cam.raw[y * p.cam.width + x];
      raw << '\n';
    }
  }

  auto scene_name = [&](int64_t i) {
    return static_cast<size_t>(i) < options.scene_class_names.size() ? options.scene_class_names[i]
                                                                     : "scene" + std::to_string(i);
  };
  std::vector<int64_t> order(p.scene_log_probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return p.scene_log_probs[a] > p.scene_log_probs[b]; });
  order.resize(std::min<size_t>(order.size(), static_cast<size_t>(std::max(options.top_k, 1))));

  nlohmann::json r;
  r["schema"] = "mtnet.result";
  r["schema_version"] = kResultSchemaVersion;
  r["image"] = options.image_path;
  r["height"] = h;
  r["width"] = w;
  r["overlay"] = "overlay.ppm";
  r["overlay_blend"] = "overlay_blend.ppm";
  r["scene_topk"] = nlohmann::json::array();
  for (auto i : order) {
    r["scene_topk"].push_back({{"index", i},
                               {"name", scene_name(i)},
                               {"log_prob", p.scene_log_probs[i]},
                               {"probability", std::exp(p.scene_log_probs[i])}});
  }
  r["cam"] = {{"class", p.top_scene},
              {"name", scene_name(p.top_scene)},
              {"image", "cam.pgm"},
              {"raw", "cam_raw.txt"},
              {"raw_height", p.cam.height},
              {"raw_width", p.cam.width}};
  if (depth) {
    nlohmann::json fb;
    fb["threshold_m"] = options.threshold_m;
    fb["min_fraction"] = options.min_fraction;
    fb["nearby"] = nlohmann::json::array();
    for (const auto& o : nearby_objects(p.seg, *depth, h, w, options.threshold_m, options.min_fraction,
                                        options.seg_class_names)) {
      fb["nearby"].push_back({{"class", o.cls},
                              {"name", o.name},
                              {"pixel_fraction", o.fraction},
                              {"min_depth_m", o.min_depth}});
    }
    r["feedback"] = fb;
  }
  std::ofstream out(dir / "result.json", std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write result.json in " + options.out_dir);
  out << r.dump(2) << '\n';
  return r;
}

}  // namespace mtnet
