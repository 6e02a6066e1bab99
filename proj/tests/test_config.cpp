// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include <doctest.h>

#include <fstream>

#include "config.hpp"
#include "error.hpp"
#include "helpers.hpp"

using namespace mtnet;

TEST_CASE("every key round-trips through its text form") {
  const Settings base = preset("toy");
  for (const auto& info : setting_keys()) {
    Settings s = base;
    const std::string v = get_setting(s, info.key);
    apply_setting(s, info.key, v);
    CHECK(get_setting(s, info.key) == v);
  }
  Settings s = base;
  apply_settings_text(s, format_settings(base));
  CHECK(format_settings(s) == format_settings(base));
}

TEST_CASE("settings text parsing") {
  Settings s = preset("toy");
  apply_settings_text(s,
                      "# comment\n"
                      "seg.spp_grids = 1, 3   # trailing comment\n"
                      "\n"
                      "train.lr0=0.01\n"
                      "recog.semantic_branch = false\n"
                      "synth.rules = circle:0; square:1\n");
  CHECK(s.model.seg.spp_grids == std::vector<int64_t>{1, 3});
  CHECK(s.train.lr0 == 0.01);
  CHECK_FALSE(s.model.recog.semantic_branch);
  CHECK(resolved_synth(s).num_scene_classes() == 2);
}

TEST_CASE("errors name the offending key or line") {
  Settings s = preset("toy");
  CHECK_THROWS_WITH_AS(apply_setting(s, "seg.num_clases", "3"), doctest::Contains("seg.num_classes"), Error);
  CHECK_THROWS_WITH_AS(apply_settings_text(s, "train.lr0 = 1\nbogus\n", "f.cfg"), doctest::Contains("f.cfg:2"), Error);
  CHECK_THROWS_AS(apply_setting(s, "train.epochs", "many"), Error);
  CHECK_THROWS_AS(apply_setting(s, "train.epochs", "3.5"), Error);
  CHECK_THROWS_AS(apply_setting(s, "recog.semantic_branch", "maybe"), Error);
  CHECK_THROWS_AS(apply_setting(s, "backbone.block", "wide"), Error);
  CHECK_THROWS_AS(apply_setting(s, "backbone.stage_blocks", "1,1,1"), Error);
  CHECK_THROWS_AS(apply_settings_file(s, "/nonexistent/x.cfg"), Error);
}

TEST_CASE("settings files") {
  const std::string dir = mtnet::testing::temp_dir("cfg");
  std::ofstream(dir + "/a.cfg") << "train.epochs = 3\nmodel.seed = 4\n";
  Settings s = preset("toy");
  apply_settings_file(s, dir + "/a.cfg");
  CHECK(s.train.epochs == 3);
  CHECK(s.model.seed == 4);
}

TEST_CASE("presets") {
  for (const auto& name : preset_names()) {
    const Settings s = preset(name);
    CHECK_NOTHROW(validate(s));
  }
  CHECK(preset("r18").model.seg.num_classes == 150);
  CHECK(preset("r18").model.recog.num_classes == 1055);
  CHECK(preset("r101").model.backbone.block == BlockType::Bottleneck);
  CHECK_FALSE(preset("r18-baseline").model.recog.semantic_branch);
  CHECK_FALSE(preset("r18-base").model.seg.attention_levels[0]);
  CHECK(preset("r18-base").model.recog.semantic_branch);
  CHECK(format_settings(preset("r18-fa")) == format_settings(preset("r18")));
  CHECK_THROWS_WITH_AS(preset("r34"), doctest::Contains("r101-fa-wide"), Error);
}

TEST_CASE("architecture hash covers only architecture keys") {
  const Settings a = preset("toy");
  const std::string h = architecture_hash(a);
  CHECK(h.size() == 16);
  CHECK(architecture_hash(a.model) == h);
  Settings b = a;
  b.train.lr0 = 0.5;
  b.model.seed = 99;
  b.synth.seed = 3;
  CHECK(architecture_hash(b) == h);
  b.model.seg.attn_channels = 4;
  CHECK(architecture_hash(b) != h);
  for (const auto& info : setting_keys()) {
    if (!info.architecture) continue;
    CHECK(format_settings(a, true).find(info.key) != std::string::npos);
  }
  CHECK(format_settings(a, true).find("train.") == std::string::npos);
}

TEST_CASE("cross-field validation") {
  Settings s = preset("toy");
  s.model.recog.extractor_channels = {16, 32, 48};
  CHECK_THROWS_AS(validate(s), Error);
  s = preset("toy");
  s.train.crop = 50;
  CHECK_THROWS_AS(validate(s), Error);
  s = preset("toy");
  s.loss = {0.0, 0.0};
  CHECK_THROWS_AS(validate(s), Error);
}

TEST_CASE("manifest class counts override the model") {
  Settings s = preset("toy");
  DatasetManifest m;
  m.num_seg_classes = 150;
  m.num_scene_classes = 1055;
  match_manifest(s, m);
  CHECK(s.model.seg.num_classes == 150);
  CHECK(s.model.recog.num_classes == 1055);
}
