// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "datasets.hpp"
#include "error.hpp"
#include "fixtures.hpp"
#include "helpers.hpp"
#include "image_io.hpp"
#include "inference.hpp"

using namespace mtnet;
namespace fs = std::filesystem;

namespace {

RgbImage to_rgb(const Sample& s) {
  RgbImage img{s.width, s.height, std::vector<uint8_t>(static_cast<size_t>(3 * s.height * s.width))};
  const int64_t hw = s.height * s.width;
  for (int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) img.pixels[3 * i + c] = static_cast<uint8_t>(std::lround(s.image[c * hw + i] * 255));
  return img;
}

ModelConfig preset_model() { return mtnet::testing::micro_task_config(); }

}  // namespace

TEST_CASE("palette") {
  CHECK(palette_colour(0) == std::array<uint8_t, 3>{0, 0, 0});
  CHECK(palette_colour(1) == std::array<uint8_t, 3>{128, 0, 0});
  CHECK(palette_colour(2) == std::array<uint8_t, 3>{0, 128, 0});
  CHECK(palette_colour(3) == std::array<uint8_t, 3>{128, 128, 0});
  CHECK(palette_colour(8) == std::array<uint8_t, 3>{64, 0, 0});
  std::set<std::array<uint8_t, 3>> seen;
  for (int32_t l = 0; l < 4096; ++l) seen.insert(palette_colour(l));
  CHECK(seen.size() == 4096);
}

TEST_CASE("overlay decodes to the label map") {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<int32_t> d(0, (1 << 24) - 1);
  std::vector<int32_t> labels(200);
  for (auto& l : labels) l = d(rng);
  labels[0] = 0;
  labels[1] = 149;
  const RgbImage o = render_overlay(labels, 10, 20);
  CHECK(o.width == 20);
  CHECK(decode_overlay(o) == labels);
}

TEST_CASE("nearby objects worked example") {
  // 2x4 image. Class 1 near at 1.0 and 1.5, class 2 at 2.5 (too far),
  // class 3 at 0.8 plus one invalid reading.
  const std::vector<int32_t> seg{1, 1, 2, 3, 0, 3, 3, 1};
  const std::vector<double> depth{1.0, 1.5, 2.5, 0.0, 9.0, 0.8, 2.0, 3.0};
  const auto near = nearby_objects(seg, depth, 2, 4, 2.0, 0.0, {"bg", "chair", "table", "door"});
  REQUIRE(near.size() == 2);
  CHECK(near[0].cls == 3);
  CHECK(near[0].name == "door");
  CHECK(near[0].min_depth == 0.8);
  CHECK(near[0].fraction == doctest::Approx(2.0 / 8));
  CHECK(near[1].cls == 1);
  CHECK(near[1].fraction == doctest::Approx(2.0 / 8));
  CHECK(nearby_objects(seg, depth, 2, 4, 2.0, 0.3).empty());
  CHECK(nearby_objects(seg, depth, 2, 4, 0.5, 0.0).empty());
  CHECK_THROWS_AS(nearby_objects(seg, std::vector<double>(7, 1.0), 2, 4), Error);
}

TEST_CASE("nearby objects are monotone in the threshold") {
  std::mt19937_64 rng(62);
  std::uniform_int_distribution<int32_t> dl(0, 5);
  std::uniform_real_distribution<double> dd(0.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int32_t> seg(64);
    std::vector<double> depth(64);
    for (size_t i = 0; i < 64; ++i) {
      seg[i] = dl(rng);
      depth[i] = rng() % 7 == 0 ? 0.0 : dd(rng);
    }
    std::set<int32_t> prev;
    for (double t = 0.0; t <= 4.0; t += 0.25) {
      std::set<int32_t> cur;
      for (const auto& o : nearby_objects(seg, depth, 8, 8, t, 0.02)) {
        cur.insert(o.cls);
        CHECK(o.min_depth > 0.0);
        CHECK(o.min_depth <= t);
      }
      CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      prev = cur;
    }
  }
}

TEST_CASE("prediction shapes and posteriors") {
  const JointModel model(preset_model());
  const auto samples = mtnet::testing::micro_samples(1);
  const Prediction p = predict(model, samples[0].image, 32, 32);
  CHECK(p.seg.size() == 1024);
  double total = 0;
  for (double y : p.scene_log_probs) total += std::exp(y);
  CHECK(total == doctest::Approx(1.0));
  CHECK(p.cam.rendered.size() == 1024);

  // Odd sizes are resized for the network and back.
  std::vector<float> odd(3 * 40 * 50, 0.5f);
  const Prediction q = predict(model, odd, 40, 50);
  CHECK(q.seg.size() == 2000);
  CHECK(q.cam.out_height == 40);
}

TEST_CASE("run_inference writes every output") {
  const std::string dir = mtnet::testing::temp_dir("infer");
  const JointModel model(preset_model());
  const auto samples = mtnet::testing::micro_samples(1);
  write_ppm(dir + "/img.ppm", to_rgb(samples[0]));
  GrayImage depth{32, 32, 65535, std::vector<uint16_t>(1024, 1000)};
  write_pgm(dir + "/depth.pgm", depth);

  InferOptions opt;
  opt.image_path = dir + "/img.ppm";
  opt.out_dir = dir + "/out";
  opt.top_k = 3;
  opt.scene_class_names = {"a", "b"};
  const auto r = run_inference(model, opt);
  CHECK(r["schema"] == "mtnet.result");
  CHECK(r["schema_version"] == kResultSchemaVersion);
  CHECK_FALSE(r.contains("feedback"));
  REQUIRE(r["scene_topk"].size() == 3);
  double prev = 2.0;
  for (const auto& e : r["scene_topk"]) {
    const double pr = e["probability"].get<double>();
    CHECK(pr == doctest::Approx(std::exp(e["log_prob"].get<double>())));
    CHECK(pr <= prev);
    prev = pr;
  }
  for (const char* f : {"overlay.ppm", "overlay_blend.ppm", "cam.pgm", "cam_raw.txt", "result.json"}) {
    CHECK(fs::exists(fs::path(opt.out_dir) / f));
  }
  std::ifstream raw(opt.out_dir + "/cam_raw.txt");
  int64_t h = 0, w = 0;
  raw >> h >> w;
  CHECK(h == r["cam"]["raw_height"].get<int64_t>());
  CHECK(w == r["cam"]["raw_width"].get<int64_t>());
  CHECK(decode_overlay(read_ppm(opt.out_dir + "/overlay.ppm")).size() == 1024);

  opt.depth_path = dir + "/depth.pgm";
  const auto with_depth = run_inference(model, opt);
  REQUIRE(with_depth.contains("feedback"));
  CHECK(with_depth["feedback"]["threshold_m"] == 2.0);
  double frac = 0;
  for (const auto& o : with_depth["feedback"]["nearby"]) {
    frac += o["pixel_fraction"].get<double>();
    CHECK(o["min_depth_m"] == 1.0);
  }
  CHECK(frac <= 1.0 + 1e-12);

  write_pgm(dir + "/small.pgm", GrayImage{8, 8, 65535, std::vector<uint16_t>(64, 1000)});
  opt.depth_path = dir + "/small.pgm";
  CHECK_THROWS_WITH_AS(run_inference(model, opt), doctest::Contains("not aligned"), Error);
}
