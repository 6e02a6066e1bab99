// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

// mtnet command-line front end. Everything goes through the C API.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtnet/mtnet.h"

namespace fs = std::filesystem;

namespace {

struct CliError {
  std::string message;
  int code;
};

void check(mtnet_status s) {
  if (s != MTNET_OK) throw CliError{mtnet_last_error(), static_cast<int>(s)};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  mtnet_free_string(s);
  return out;
}

class Config {
 public:
  explicit Config(const std::string& preset) { check(mtnet_config_create(preset.c_str(), &c_)); }
  ~Config() { mtnet_config_free(c_); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;

  void load(const std::string& path) { check(mtnet_config_load_file(c_, path.c_str())); }
  void set(const std::string& key, const std::string& value) {
    check(mtnet_config_set(c_, key.c_str(), value.c_str()));
  }
  void set_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CliError{"--set expects key=value, got '" + kv + "'", 2};
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  mtnet_config* get() const { return c_; }

 private:
  mtnet_config* c_ = nullptr;
};

class Model {
 public:
  Model(const std::string& checkpoint, const mtnet_config* expected) {
    check(mtnet_model_load(checkpoint.c_str(), expected, &m_));
  }
  ~Model() { mtnet_model_free(m_); }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  mtnet_model* get() const { return m_; }

 private:
  mtnet_model* m_ = nullptr;
};

struct CommonOptions {
  std::string preset = "toy";
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;

  void add_to(CLI::App* app) {
    app->add_option("--preset", preset, "base settings (toy, r18, r101, ...)")->capture_default_str();
    app->add_option("--config", config_files, "settings file, applied in order");
    app->add_option("--set", overrides, "key=value override, applied after files");
  }

  void apply(Config& c) const {
    for (const auto& f : config_files) c.load(f);
    for (const auto& kv : overrides) c.set_override(kv);
  }
};

void on_epoch(const char* record, void*) { std::fprintf(stderr, "%s\n", record); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtnet: joint segmentation and scene recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mtnet_version()));

  // gen-data
  CommonOptions gen_opts;
  std::string gen_out;
  std::optional<long long> gen_seed, gen_size, gen_train, gen_val;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic shapes dataset");
  gen_opts.add_to(gen);
  gen->add_option("--out", gen_out, "output directory (receives train/ and val/)")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--size", gen_size, "image side in pixels");
  gen->add_option("--train", gen_train, "training samples");
  gen->add_option("--val", gen_val, "validation samples");

  // train
  CommonOptions train_opts;
  std::string train_data, train_dir, val_dir, train_out;
  std::optional<long long> train_epochs, train_seed;
  auto* train = app.add_subcommand("train", "train a joint model on folder datasets");
  train_opts.add_to(train);
  train->add_option("--data", train_data, "dataset root holding train/ and val/");
  train->add_option("--train-dir", train_dir, "training folder dataset");
  train->add_option("--val-dir", val_dir, "validation folder dataset");
  train->add_option("--out", train_out, "output directory for checkpoints and log")->required();
  train->add_option("--epochs", train_epochs, "epochs");
  train->add_option("--seed", train_seed, "seed for initialization, shuffling and augmentation");

  // eval
  CommonOptions eval_opts;
  std::string eval_data, eval_ckpt, eval_pred;
  bool eval_check_config = false;
  auto* eval = app.add_subcommand("eval", "score a checkpoint or stored predictions");
  eval_opts.add_to(eval);
  eval->add_option("--data", eval_data, "folder dataset")->required();
  auto* ckpt_opt = eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  auto* pred_opt = eval->add_option("--predictions", eval_pred, "directory with seg/ and scene_scores.txt");
  ckpt_opt->excludes(pred_opt);
  eval->add_flag("--check-config", eval_check_config, "refuse checkpoints whose architecture differs from the settings");

  // infer
  CommonOptions infer_opts;
  std::string infer_ckpt, infer_image, infer_depth, infer_out;
  double threshold = 2.0, min_fraction = 0.005;
  bool infer_check_config = false;
  auto* infer = app.add_subcommand("infer", "segment, classify and render one image");
  infer_opts.add_to(infer);
  infer->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer->add_option("--image", infer_image, "binary PPM image")->required();
  infer->add_option("--depth", infer_depth, "aligned 16-bit PGM depth in millimetres");
  infer->add_option("--out", infer_out, "output directory")->required();
  infer->add_option("--threshold", threshold, "nearby distance in metres")->capture_default_str();
  infer->add_option("--min-fraction", min_fraction, "smallest reported image fraction")->capture_default_str();
  infer->add_flag("--check-config", infer_check_config, "refuse checkpoints whose architecture differs from the settings");

  // profile
  std::vector<std::string> targets;
  std::vector<std::string> profile_overrides;
  long long profile_size = 384;
  int fps_iters = 0;
  auto* profile = app.add_subcommand("profile", "FLOPs, parameters and throughput");
  profile->add_option("targets", targets, "preset names or settings files, reported in this order")->required();
  profile->add_option("--set", profile_overrides, "key=value override for every target");
  profile->add_option("--size", profile_size, "square input side")->capture_default_str();
  profile->add_option("--fps-iters", fps_iters, "timed forward passes, 0 = skip")->capture_default_str();

  // config
  CommonOptions config_opts;
  bool list_keys = false;
  auto* config = app.add_subcommand("config", "print effective settings");
  config_opts.add_to(config);
  config->add_flag("--keys", list_keys, "list valid keys instead");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Config c(gen_opts.preset);
      gen_opts.apply(c);
      if (gen_seed) c.set("synth.seed", std::to_string(*gen_seed));
      if (gen_size) c.set("synth.size", std::to_string(*gen_size));
      if (gen_train) c.set("synth.train", std::to_string(*gen_train));
      if (gen_val) c.set("synth.val", std::to_string(*gen_val));
      check(mtnet_gen_data(c.get(), gen_out.c_str()));
      std::printf("wrote %s/train and %s/val\n", gen_out.c_str(), gen_out.c_str());
    } else if (train->parsed()) {
      Config c(train_opts.preset);
      train_opts.apply(c);
      if (train_epochs) c.set("train.epochs", std::to_string(*train_epochs));
      if (train_seed) {
        c.set("train.seed", std::to_string(*train_seed));
        c.set("model.seed", std::to_string(*train_seed));
      }
      if (!train_data.empty()) {
        if (train_dir.empty()) train_dir = (fs::path(train_data) / "train").string();
        if (val_dir.empty() && fs::exists(fs::path(train_data) / "val")) {
          val_dir = (fs::path(train_data) / "val").string();
        }
      }
      if (train_dir.empty()) throw CliError{"train needs --data or --train-dir", 2};
      char* summary = nullptr;
      check(mtnet_train(c.get(), train_dir.c_str(), val_dir.empty() ? nullptr : val_dir.c_str(),
                        train_out.c_str(), on_epoch, nullptr, &summary));
      std::printf("%s\n", take(summary).c_str());
    } else if (eval->parsed()) {
      char* report = nullptr;
      if (!eval_pred.empty()) {
        check(mtnet_eval_predictions(eval_data.c_str(), eval_pred.c_str(), &report));
      } else {
        if (eval_ckpt.empty()) throw CliError{"eval needs --checkpoint or --predictions", 2};
        Config c(eval_opts.preset);
        eval_opts.apply(c);
        Model m(eval_ckpt, eval_check_config ? c.get() : nullptr);
        check(mtnet_eval(m.get(), eval_data.c_str(), &report));
      }
      std::printf("%s\n", take(report).c_str());
    } else if (infer->parsed()) {
      Config c(infer_opts.preset);
      infer_opts.apply(c);
      Model m(infer_ckpt, infer_check_config ? c.get() : nullptr);
      char* result = nullptr;
      check(mtnet_infer(m.get(), infer_image.c_str(), infer_depth.empty() ? nullptr : infer_depth.c_str(),
                        infer_out.c_str(), threshold, min_fraction, &result));
      std::printf("%s\n", take(result).c_str());
    } else if (profile->parsed()) {
      std::vector<std::unique_ptr<Config>> configs;
      std::vector<const mtnet_config*> handles;
      std::vector<const char*> names;
      for (const auto& t : targets) {
        if (fs::is_regular_file(t)) {
          configs.push_back(std::make_unique<Config>("r18"));
          configs.back()->load(t);
        } else {
          configs.push_back(std::make_unique<Config>(t));
        }
        for (const auto& kv : profile_overrides) configs.back()->set_override(kv);
        handles.push_back(configs.back()->get());
        names.push_back(t.c_str());
      }
      char* report = nullptr;
      check(mtnet_profile(handles.data(), names.data(), handles.size(), profile_size, profile_size,
                          fps_iters, &report));
      std::printf("%s", take(report).c_str());
    } else if (config->parsed()) {
      char* text = nullptr;
      if (list_keys) {
        check(mtnet_config_keys(&text));
      } else {
        Config c(config_opts.preset);
        config_opts.apply(c);
        check(mtnet_config_dump(c.get(), &text));
      }
      std::printf("%s", take(text).c_str());
    }
  } catch (const CliError& e) {
    std::fprintf(stderr, "mtnet: error: %s\n", e.message.c_str());
    return e.code == 0 ? 1 : e.code;
  }
  return 0;
}
