// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "app.hpp"
#include "archive.hpp"
#include "checkpoint.hpp"
#include "error.hpp"
#include "fixtures.hpp"
#include "helpers.hpp"
#include "image_io.hpp"
#include "inference.hpp"

using namespace mtnet;
namespace fs = std::filesystem;

namespace {

Settings micro_settings() {
  Settings s = preset("toy");
  s.model = mtnet::testing::micro_task_config();
  s.train.crop = 32;
  s.train.epochs = 1;
  s.train.batch_size = 4;
  s.synth.size = 32;
  s.synth.train_count = 8;
  s.synth.val_count = 4;
  return s;
}

std::vector<double> all_values(const JointModel& m) {
  std::vector<double> v;
  for (const auto& nt : m.store().all()) v.insert(v.end(), nt.tensor.data().begin(), nt.tensor.data().end());
  return v;
}

}  // namespace

TEST_CASE("checkpoint round trip restores every tensor") {
  const std::string dir = mtnet::testing::temp_dir("ckpt");
  const Settings s = micro_settings();
  LoadedModel a = create_model(s);
  CheckpointInfo info{3, 0.5, 0.25, architecture_hash(s), format_settings(s), {"bg"}, {"x", "y"}};
  save_checkpoint(dir + "/m.ckpt", *a.model, info);

  const CheckpointInfo back = read_checkpoint_info(dir + "/m.ckpt");
  CHECK(back.epoch == 3);
  CHECK(back.miou == 0.5);
  CHECK(back.config_hash == info.config_hash);
  CHECK(back.scene_class_names == info.scene_class_names);

  Settings other = s;
  other.model.seed = 1234;
  LoadedModel b = create_model(other);
  CHECK(all_values(*a.model) != all_values(*b.model));
  load_checkpoint(*b.model, dir + "/m.ckpt");
  CHECK(all_values(*a.model) == all_values(*b.model));

  const LoadedModel c = load_model(dir + "/m.ckpt");
  CHECK(all_values(*c.model) == all_values(*a.model));
  CHECK(c.info.epoch == 3);
}

TEST_CASE("architecture mismatch is refused with the differing keys") {
  const std::string dir = mtnet::testing::temp_dir("ckpt_mismatch");
  const Settings s = micro_settings();
  LoadedModel a = create_model(s);
  save_checkpoint(dir + "/m.ckpt", *a.model, {0, 0, 0, architecture_hash(s), format_settings(s), {}, {}});

  Settings expected = s;
  expected.model.seg.attn_channels = 3;
  CHECK_THROWS_WITH_AS(load_model(dir + "/m.ckpt", &expected), doctest::Contains("seg.attn_channels"), Error);
  Settings training_only = s;
  training_only.train.lr0 = 1.0;
  CHECK_NOTHROW(load_model(dir + "/m.ckpt", &training_only));

  // Loading into a different architecture fails before any value is written.
  Settings wide = s;
  wide.model.seg.decoder_channels = 4;
  LoadedModel w = create_model(wide);
  const auto before = all_values(*w.model);
  CHECK_THROWS_AS(load_checkpoint(*w.model, dir + "/m.ckpt"), Error);
  CHECK(all_values(*w.model) == before);

  // A tampered config no longer matches its hash.
  Archive ar = Archive::read(dir + "/m.ckpt");
  ar.metadata["config"] = format_settings(wide);
  ar.write(dir + "/tampered.ckpt");
  CHECK_THROWS_WITH_AS(load_model(dir + "/tampered.ckpt"), doctest::Contains("hash"), Error);
}

TEST_CASE("train, evaluate and score stored predictions on folder datasets") {
  const std::string dir = mtnet::testing::temp_dir("app");
  Settings s = micro_settings();
  generate_synthetic(resolved_synth(s), dir + "/data");
  int epochs_seen = 0;
  const TrainSummary summary =
      train_folder(s, dir + "/data/train", dir + "/data/val", dir + "/run", [&](const EpochRecord&) { ++epochs_seen; });
  CHECK(epochs_seen == 1);
  CHECK(summary.best_epoch == 0);
  CHECK(summary.to_json()["records"].size() == 1);

  const LoadedModel m = load_model(dir + "/run/best.ckpt");
  CHECK(m.info.seg_class_names.front() == "background");
  CHECK(m.info.scene_class_names.size() == 6);
  const EvalResult r = evaluate_folder(m, dir + "/data/val");
  CHECK(r.scene_labels.size() == 4);
  CHECK(r.metrics.miou == doctest::Approx(summary.log.records[0].metrics.miou));

  // Ground truth written as predictions scores perfectly.
  const FolderDataset val = FolderDataset::open(dir + "/data/val");
  fs::create_directories(dir + "/pred/seg");
  std::ofstream scores(dir + "/pred/scene_scores.txt");
  for (size_t i = 0; i < val.size(); ++i) {
    const Sample smp = val.load(i);
    GrayImage g{smp.width, smp.height, 255, std::vector<uint16_t>(smp.seg_label.begin(), smp.seg_label.end())};
    write_pgm(dir + "/pred/seg/" + smp.id + ".pgm", g);
    scores << smp.id;
    for (int k = 0; k < 6; ++k) scores << ',' << (k == smp.scene_label ? 1.0 : 0.0);
    scores << '\n';
  }
  scores.close();
  const EvalResult perfect = evaluate_predictions(dir + "/data/val", dir + "/pred");
  CHECK(perfect.metrics.miou == 1.0);
  CHECK(perfect.metrics.top(1) == 1.0);
  CHECK(perfect.metrics.mca == 1.0);

  fs::remove(dir + "/pred/seg/val_0.pgm");
  CHECK_THROWS_AS(evaluate_predictions(dir + "/data/val", dir + "/pred"), Error);

  Settings mismatched = s;
  mismatched.model.seg.num_classes = 4;
  LoadedModel wrong = create_model(mismatched);
  CHECK_THROWS_AS(evaluate_folder(wrong, dir + "/data/val"), Error);
}

TEST_CASE("manifest ignore index takes priority") {
  Settings s = micro_settings();
  s.train.ignore_index = 7;
  DatasetManifest m;
  CHECK(effective_ignore_index(s, m) == 7);
  m.ignore_index = 255;
  CHECK(effective_ignore_index(s, m) == 255);
}

TEST_CASE("profile report lists configs in order") {
  const std::string text = profile_report({{"b", preset("toy")}, {"a", preset("toy")}}, 64, 64, 0);
  const auto pb = text.rfind("\nb "), pa = text.rfind("\na ");
  REQUIRE(pb != std::string::npos);
  REQUIRE(pa != std::string::npos);
  CHECK(pb < pa);
}
