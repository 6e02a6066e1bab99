// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "error.hpp"
#include "strings.hpp"

namespace mtnet {

namespace {

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::Config, key + ": expected an integer, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::Config, key + ": expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::Config, key + ": expected true or false, got '" + v + "'");
}

template <size_t N, typename T>
std::array<T, N> parse_fixed(const std::string& key, const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() != N) {
    fail(ErrorCode::Config, key + ": expected " + std::to_string(N) + " comma-separated values");
  }
  std::array<T, N> out{};
  for (size_t i = 0; i < N; ++i) out[i] = static_cast<T>(parse_int(key, parts[i]));
  return out;
}

std::vector<int64_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  for (const auto& p : split(v, ',')) out.push_back(parse_int(key, p));
  return out;
}

template <typename C>
std::string format_list(const C& values) {
  std::string out;
  for (const auto& x : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(static_cast<int64_t>(x));
  }
  return out;
}

std::string fmt_real(double v) {
  // Shortest text that reads back to the same double.
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Binding {
  SettingInfo info;
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

#define INT_FIELD(KEY, FIELD, ARCH, HELP)                                                     \
  Binding {                                                                                   \
    {KEY, HELP, ARCH},                                                                        \
        [](Settings& s, const std::string& v) {                                               \
          s.FIELD = static_cast<decltype(s.FIELD)>(parse_int(KEY, v));                         \
        },                                                                                    \
        [](const Settings& s) { return std::to_string(s.FIELD); }                             \
  }
#define REAL_FIELD(KEY, FIELD, HELP)                                                          \
  Binding {                                                                                   \
    {KEY, HELP, false}, [](Settings& s, const std::string& v) { s.FIELD = parse_real(KEY, v); }, \
        [](const Settings& s) { return fmt_real(s.FIELD); }                                   \
  }
#define BOOL_FIELD(KEY, FIELD, ARCH, HELP)                                                    \
  Binding {                                                                                   \
    {KEY, HELP, ARCH}, [](Settings& s, const std::string& v) { s.FIELD = parse_bool(KEY, v); }, \
        [](const Settings& s) { return fmt_bool(s.FIELD); }                                   \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      {{"backbone.block", "basic | bottleneck", true},
       [](Settings& s, const std::string& v) {
         if (v == "basic") {
           s.model.backbone.block = BlockType::Basic;
         } else if (v == "bottleneck") {
           s.model.backbone.block = BlockType::Bottleneck;
         } else {
           fail(ErrorCode::Config, "backbone.block: expected basic or bottleneck, got '" + v + "'");
         }
       },
       [](const Settings& s) {
         return std::string(s.model.backbone.block == BlockType::Basic ? "basic" : "bottleneck");
       }},
      {{"backbone.stage_blocks", "residual blocks per stage, 4 values", true},
       [](Settings& s, const std::string& v) {
         s.model.backbone.stage_blocks = parse_fixed<4, int>("backbone.stage_blocks", v);
       },
       [](const Settings& s) { return format_list(s.model.backbone.stage_blocks); }},
      {{"backbone.stage_channels", "output channels per stage, 4 values", true},
       [](Settings& s, const std::string& v) {
         s.model.backbone.stage_channels = parse_fixed<4, int64_t>("backbone.stage_channels", v);
       },
       [](const Settings& s) { return format_list(s.model.backbone.stage_channels); }},
      INT_FIELD("backbone.stem_channels", model.backbone.stem_channels, true, "stem conv width"),
      INT_FIELD("backbone.stem_kernel", model.backbone.stem_kernel, true, "stem conv kernel size"),
      INT_FIELD("backbone.input_channels", model.backbone.input_channels, true, "image channels"),
      {{"backbone.init", "scratch | file", false},
       [](Settings& s, const std::string& v) {
         if (v == "scratch") {
           s.model.backbone.init = InitMode::Scratch;
         } else if (v == "file") {
           s.model.backbone.init = InitMode::WeightsFile;
         } else {
           fail(ErrorCode::Config, "backbone.init: expected scratch or file, got '" + v + "'");
         }
       },
       [](const Settings& s) {
         return std::string(s.model.backbone.init == InitMode::Scratch ? "scratch" : "file");
       }},
      {{"backbone.weights", "weights archive used when backbone.init = file", false},
       [](Settings& s, const std::string& v) { s.model.backbone.weights_path = v; },
       [](const Settings& s) { return s.model.backbone.weights_path; }},
      BOOL_FIELD("backbone.freeze_norm_stats", model.backbone.freeze_norm_stats, false,
                 "keep batch-norm running statistics fixed while training"),
      INT_FIELD("seg.num_classes", model.seg.num_classes, true, "segmentation classes"),
      INT_FIELD("seg.decoder_channels", model.seg.decoder_channels, true, "decoder width"),
      INT_FIELD("seg.attn_channels", model.seg.attn_channels, true, "query/key width"),
      {{"seg.spp_grids", "pyramid pooling grid sizes", true},
       [](Settings& s, const std::string& v) { s.model.seg.spp_grids = parse_list("seg.spp_grids", v); },
       [](const Settings& s) { return format_list(s.model.seg.spp_grids); }},
      {{"seg.attention_levels", "fast attention on stride 16, 8, 4 links (0/1 each)", true},
       [](Settings& s, const std::string& v) {
         const auto flags = parse_fixed<3, int>("seg.attention_levels", v);
         for (int i = 0; i < 3; ++i) s.model.seg.attention_levels[i] = flags[i] != 0;
       },
       [](const Settings& s) { return format_list(s.model.seg.attention_levels); }},
      INT_FIELD("recog.num_classes", model.recog.num_classes, true, "scene classes"),
      BOOL_FIELD("recog.semantic_branch", model.recog.semantic_branch, true,
                 "gate scene features with the segmentation-driven branch"),
      {{"recog.extractor_channels", "semantic extractor widths, 3 values", true},
       [](Settings& s, const std::string& v) {
         s.model.recog.extractor_channels = parse_fixed<3, int64_t>("recog.extractor_channels", v);
       },
       [](const Settings& s) { return format_list(s.model.recog.extractor_channels); }},
      INT_FIELD("recog.reduction", model.recog.reduction, true, "channel attention reduction"),
      INT_FIELD("recog.fusion_channels", model.recog.fusion_channels, true,
                "fusion conv width, 0 = stride-32 width"),
      INT_FIELD("model.seed", model.seed, false, "parameter init seed"),
      INT_FIELD("train.crop", train.crop, false, "square training crop"),
      REAL_FIELD("train.lr0", train.lr0, "initial learning rate"),
      REAL_FIELD("train.weight_decay", train.weight_decay, "decoupled weight decay"),
      INT_FIELD("train.epochs", train.epochs, false, "epochs"),
      INT_FIELD("train.batch_size", train.batch_size, false, "batch size"),
      INT_FIELD("train.seed", train.seed, false, "shuffle/augmentation seed"),
      INT_FIELD("train.ignore_index", train.ignore_index, false,
                "label excluded from loss and metrics, -1 = none"),
      BOOL_FIELD("train.augment", train.augment.enabled, false, "enable augmentation"),
      REAL_FIELD("train.flip_prob", train.augment.flip_prob, "horizontal flip probability"),
      REAL_FIELD("train.scale_min", train.augment.scale_min, "smallest crop zoom"),
      REAL_FIELD("train.scale_max", train.augment.scale_max, "largest crop zoom"),
      REAL_FIELD("train.blur_prob", train.augment.blur_prob, "gaussian blur probability"),
      REAL_FIELD("train.contrast_prob", train.augment.contrast_prob, "contrast jitter probability"),
      REAL_FIELD("loss.lambda1", loss.lambda1, "segmentation loss weight"),
      REAL_FIELD("loss.lambda2", loss.lambda2, "scene loss weight"),
      {{"synth.shapes", "shape vocabulary: circle, square, triangle, diamond", false},
       [](Settings& s, const std::string& v) { s.synth.shapes = split(v, ','); },
       [](const Settings& s) { return join(s.synth.shapes, ","); }},
      {{"synth.rules", "scene rules such as 'circle+square:0; triangle:1'; empty = all pairs", false},
       [](Settings& s, const std::string& v) { s.synth_rules = v; },
       [](const Settings& s) { return s.synth_rules; }},
      INT_FIELD("synth.size", synth.size, false, "image side in pixels"),
      INT_FIELD("synth.train", synth.train_count, false, "training samples"),
      INT_FIELD("synth.val", synth.val_count, false, "validation samples"),
      INT_FIELD("synth.seed", synth.seed, false, "generator seed"),
      BOOL_FIELD("synth.depth", synth.depth, false, "write depth maps"),
      REAL_FIELD("synth.depth_dropout", synth.depth_dropout, "fraction of invalid depth pixels"),
  };
  return table;
}

#undef INT_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

const Binding& binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (b.info.key == key) return b;
  }
  std::vector<std::string> keys;
  for (const auto& b : bindings()) keys.push_back(b.info.key);
  fail(ErrorCode::Config, "unknown config key '" + key + "'; valid keys: " + join(keys, ", "));
}

}  // namespace

const std::vector<SettingInfo>& setting_keys() {
  static const std::vector<SettingInfo> keys = [] {
    std::vector<SettingInfo> out;
    for (const auto& b : bindings()) out.push_back(b.info);
    return out;
  }();
  return keys;
}

void apply_setting(Settings& s, const std::string& key, const std::string& value) {
  binding(key).set(s, value);
}

std::string get_setting(const Settings& s, const std::string& key) { return binding(key).get(s); }

void apply_settings_text(Settings& s, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      const auto kv = parse_key_value_line(line);
      if (kv) apply_setting(s, kv->first, kv->second);
    } catch (const Error& e) {
      fail(e.code(), origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_settings_file(Settings& s, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_settings_text(s, ss.str(), path);
}

std::string format_settings(const Settings& s, bool architecture_only) {
  std::string out;
  for (const auto& b : bindings()) {
    if (architecture_only && !b.info.architecture) continue;
    out += b.info.key + " = " + b.get(s) + "\n";
  }
  return out;
}

void validate(const Settings& s) {
  s.model.backbone.validate();
  s.model.seg.validate();
  s.model.recog.validate(s.model.backbone);
  s.train.validate();
  s.loss.validate();
}

SyntheticConfig resolved_synth(const Settings& s) {
  SyntheticConfig c = s.synth;
  c.rules = parse_scene_rules(s.synth_rules, c.shapes);
  c.finalize();
  return c;
}

std::string architecture_hash(const Settings& s) {
  const std::string text = format_settings(s, true);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string architecture_hash(const ModelConfig& m) {
  Settings s;
  s.model = m;
  return architecture_hash(s);
}

Settings preset(const std::string& name) {
  Settings s;
  auto& m = s.model;
  if (name == "toy") {
    m.backbone.stage_blocks = {1, 1, 1, 1};
    m.backbone.stage_channels = {8, 16, 32, 64};
    m.backbone.stem_channels = 8;
    m.backbone.stem_kernel = 3;
    m.seg.num_classes = 5;
    m.seg.decoder_channels = 32;
    m.seg.attn_channels = 8;
    m.seg.spp_grids = {1, 2};
    m.recog.num_classes = 6;
    m.recog.extractor_channels = {16, 32, 64};
    m.recog.reduction = 4;
    s.train.crop = 64;
    s.train.lr0 = 2e-3;
    s.train.epochs = 12;
    s.train.batch_size = 16;
    return s;
  }
  const bool r101 = name.rfind("r101", 0) == 0;
  if (!r101 && name.rfind("r18", 0) != 0) {
    fail(ErrorCode::Config, "unknown preset '" + name + "'; valid presets: " + join(preset_names(), ", "));
  }
  m.seg.num_classes = 150;
  m.recog.num_classes = 1055;
  if (r101) {
    m.backbone.block = BlockType::Bottleneck;
    m.backbone.stage_blocks = {3, 4, 23, 3};
    m.backbone.stage_channels = {256, 512, 1024, 2048};
    m.recog.extractor_channels = {512, 1024, 2048};
  }
  const std::string variant = name.substr(r101 ? 4 : 3);
  if (variant == "-base") {
    m.seg.attention_levels = {false, false, false};
  } else if (variant == "-baseline") {
    m.seg.attention_levels = {false, false, false};
    m.recog.semantic_branch = false;
  } else if (variant == "-fa-wide") {
    m.recog.extractor_channels[0] *= 2;
    m.recog.extractor_channels[1] *= 2;
    m.recog.reduction = 8;
  } else if (!variant.empty() && variant != "-fa") {
    fail(ErrorCode::Config, "unknown preset '" + name + "'; valid presets: " + join(preset_names(), ", "));
  }
  return s;
}

std::vector<std::string> preset_names() {
  return {"toy",           "r18-baseline", "r18-base", "r18", "r18-fa-wide",
          "r101-baseline", "r101-base",    "r101",     "r101-fa-wide"};
}

void match_manifest(Settings& s, const DatasetManifest& manifest) {
  s.model.seg.num_classes = manifest.num_seg_classes;
  s.model.recog.num_classes = manifest.num_scene_classes;
}

}  // namespace mtnet
