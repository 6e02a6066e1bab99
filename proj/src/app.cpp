// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "app.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "error.hpp"
#include "image_io.hpp"
#include "strings.hpp"

namespace fs = std::filesystem;

namespace mtnet {

namespace {

std::map<std::string, std::string> setting_lines(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto kv = parse_key_value_line(line)) out[kv->first] = kv->second;
  }
  return out;
}

}  // namespace

LoadedModel create_model(const Settings& settings) {
  validate(settings);
  LoadedModel m;
  m.settings = settings;
  m.model = std::make_unique<JointModel>(settings.model);
  m.info.config_hash = architecture_hash(settings);
  m.info.config_text = format_settings(settings);
  return m;
}

LoadedModel load_model(const std::string& checkpoint, const Settings* expected) {
  LoadedModel m;
  m.info = read_checkpoint_info(checkpoint);
  apply_settings_text(m.settings, m.info.config_text, checkpoint + " (stored config)");
  if (architecture_hash(m.settings) != m.info.config_hash) {
    fail(ErrorCode::Checkpoint, checkpoint + ": stored config does not match its architecture hash");
  }
  if (expected && architecture_hash(*expected) != m.info.config_hash) {
    const auto have = setting_lines(format_settings(m.settings, true));
    const auto want = setting_lines(format_settings(*expected, true));
    std::vector<std::string> diffs;
    for (const auto& [key, value] : want) {
      if (have.at(key) != value) diffs.push_back(key + " (checkpoint " + have.at(key) + ", config " + value + ")");
    }
    fail(ErrorCode::Checkpoint, "refusing to load " + checkpoint + ": architecture hash " +
                                    m.info.config_hash + " differs from config hash " +
                                    architecture_hash(*expected) + "; differing keys: " + join(diffs, "; "));
  }
  // Stored values replace any initialization, so skip external weights.
  m.settings.model.backbone.init = InitMode::Scratch;
  validate(m.settings);
  m.model = std::make_unique<JointModel>(m.settings.model);
  load_checkpoint(*m.model, checkpoint);
  return m;
}

nlohmann::json TrainSummary::to_json() const {
  nlohmann::json j;
  j["best_epoch"] = best_epoch;
  j["out_dir"] = out_dir;
  j["best_checkpoint"] = (fs::path(out_dir) / "best.ckpt").string();
  j["last_checkpoint"] = (fs::path(out_dir) / "last.ckpt").string();
  j["log"] = (fs::path(out_dir) / "train_log.jsonl").string();
  j["records"] = nlohmann::json::array();
  for (const auto& r : log.records) j["records"].push_back(r.to_json());
  return j;
}

int32_t effective_ignore_index(const Settings& settings, const DatasetManifest& manifest) {
  return manifest.ignore_index.value_or(settings.train.ignore_index);
}

TrainSummary train_folder(const Settings& settings, const std::string& train_dir,
                          const std::string& val_dir, const std::string& out_dir,
                          const std::function<void(const EpochRecord&)>& on_epoch) {
  const FolderDataset train = FolderDataset::open(train_dir);
  std::optional<FolderDataset> val;
  if (!val_dir.empty()) {
    val = FolderDataset::open(val_dir);
    const auto& a = train.manifest();
    const auto& b = val->manifest();
    if (a.num_seg_classes != b.num_seg_classes || a.num_scene_classes != b.num_scene_classes) {
      fail(ErrorCode::Config, "training and validation manifests disagree on class counts");
    }
  }
  Settings s = settings;
  match_manifest(s, train.manifest());
  s.train.ignore_index = effective_ignore_index(s, train.manifest());
  validate(s);

  // Small datasets are held in memory; larger ones stream from disk.
  constexpr size_t kCacheLimit = 4096;
  std::vector<Sample> train_cache, val_cache;
  SampleSource train_src = SampleSource::from_folder(train);
  SampleSource val_src = val ? SampleSource::from_folder(*val) : SampleSource{};
  if (train.size() <= kCacheLimit) {
    train_cache = train.load_all();
    train_src = SampleSource::from_vector(train_cache);
  }
  if (val && val->size() <= kCacheLimit) {
    val_cache = val->load_all();
    val_src = SampleSource::from_vector(val_cache);
  }

  JointModel model(s.model);
  FitOptions opts;
  opts.out_dir = out_dir;
  opts.config_text = format_settings(s);
  opts.seg_class_names = train.manifest().seg_class_names;
  opts.scene_class_names = train.manifest().scene_class_names;
  opts.on_epoch = on_epoch;
  TrainSummary summary;
  summary.out_dir = out_dir;
  summary.log = fit(model, train_src, val_src, s.train, s.loss, opts);
  summary.best_epoch = select_checkpoint(summary.log);
  return summary;
}

EvalResult evaluate_folder(const LoadedModel& m, const std::string& data_dir) {
  const FolderDataset data = FolderDataset::open(data_dir);
  const auto& man = data.manifest();
  const auto& cfg = m.settings.model;
  if (man.num_seg_classes != cfg.seg.num_classes || man.num_scene_classes != cfg.recog.num_classes) {
    fail(ErrorCode::Config, data_dir + ": dataset has " + std::to_string(man.num_seg_classes) + "/" +
                                std::to_string(man.num_scene_classes) +
                                " segmentation/scene classes, model has " +
                                std::to_string(cfg.seg.num_classes) + "/" + std::to_string(cfg.recog.num_classes));
  }
  return evaluate(*m.model, SampleSource::from_folder(data), effective_ignore_index(m.settings, man),
                  m.settings.train.batch_size);
}

EvalResult evaluate_predictions(const std::string& data_dir, const std::string& pred_dir,
                                int32_t ignore_index) {
  const FolderDataset data = FolderDataset::open(data_dir);
  const auto& man = data.manifest();
  if (man.ignore_index) ignore_index = *man.ignore_index;
  const int64_t k = man.num_scene_classes;

  std::map<std::string, std::vector<double>> scores;
  const std::string scores_path = (fs::path(pred_dir) / "scene_scores.txt").string();
  std::ifstream in(scores_path);
  if (!in) fail(ErrorCode::Io, "missing prediction scores " + scores_path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto parts = split(line, ',');
    if (static_cast<int64_t>(parts.size()) != k + 1) {
      fail(ErrorCode::Config, scores_path + ":" + std::to_string(line_no) + ": expected id and " +
                                  std::to_string(k) + " scores");
    }
    std::vector<double> row;
    for (size_t i = 1; i < parts.size(); ++i) {
      try {
        row.push_back(std::stod(parts[i]));
      } catch (const std::exception&) {
        fail(ErrorCode::Config, scores_path + ":" + std::to_string(line_no) + ": bad score '" + parts[i] + "'");
      }
    }
    scores[parts[0]] = std::move(row);
  }

  SegConfusion confusion(man.num_seg_classes);
  EvalResult r;
  for (size_t i = 0; i < data.size(); ++i) {
    const Sample s = data.load(i);
    const std::string pred_path = (fs::path(pred_dir) / "seg" / (s.id + ".pgm")).string();
    const GrayImage pred = read_pgm(pred_path);
    if (pred.width != s.width || pred.height != s.height) {
      fail(ErrorCode::Shape, pred_path + ": prediction size does not match the annotation");
    }
    std::vector<int32_t> p(pred.pixels.begin(), pred.pixels.end());
    for (auto v : p) {
      if (v >= man.num_seg_classes) fail(ErrorCode::Config, pred_path + ": predicted class out of range");
    }
    confusion.accumulate(p, s.seg_label, ignore_index);
    const auto it = scores.find(s.id);
    if (it == scores.end()) fail(ErrorCode::Config, scores_path + ": no scores for " + s.id);
    r.scene_probs.insert(r.scene_probs.end(), it->second.begin(), it->second.end());
    r.scene_labels.push_back(s.scene_label);
  }
  r.metrics = make_report(confusion, r.scene_probs, k, r.scene_labels);
  return r;
}

std::string profile_report(const std::vector<std::pair<std::string, Settings>>& configs,
                           int64_t height, int64_t width, int fps_iters) {
  if (configs.empty()) fail(ErrorCode::InvalidArgument, "profile: no configs given");
  std::vector<ComplexityReport> reports;
  std::string out;
  for (const auto& [name, settings] : configs) {
    Settings s = settings;
    s.model.backbone.init = InitMode::Scratch;
    validate(s);
    const JointModel model(s.model);
    reports.push_back(profile_model(name, model, height, width, fps_iters));
    out += reports.back().to_text() + "\n";
  }
  return out + comparison_table(reports);
}

}  // namespace mtnet
