// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "error.hpp"
#include "image_io.hpp"
#include "strings.hpp"

namespace fs = std::filesystem;

namespace mtnet {

namespace {

constexpr std::array<double, 3> kMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kStd{0.229, 0.224, 0.225};

uint64_t splitmix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ShapeKind kind_from_name(const std::string& name) {
  if (name == "circle") return ShapeKind::Circle;
  if (name == "square") return ShapeKind::Square;
  if (name == "triangle") return ShapeKind::Triangle;
  if (name == "diamond") return ShapeKind::Diamond;
  fail(ErrorCode::Config, "unknown shape '" + name + "' (valid: circle, square, triangle, diamond)");
}

std::array<uint8_t, 3> base_colour(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Circle: return {220, 60, 60};
    case ShapeKind::Square: return {60, 200, 70};
    case ShapeKind::Triangle: return {70, 100, 235};
    case ShapeKind::Diamond: return {230, 210, 50};
  }
  return {255, 255, 255};
}

uint8_t clamp_byte(double v) { return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

// ---------------------------------------------------------------------------
// Manifest and folder datasets

DatasetManifest DatasetManifest::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "missing dataset manifest " + path);
  DatasetManifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto kv = parse_key_value_line(line);
    if (!kv) continue;
    const auto& [key, value] = *kv;
    try {
      if (key == "format") {
        if (value != "mtnet-folder-1") fail(ErrorCode::Config, "unsupported format " + value);
      } else if (key == "num_seg_classes") {
        m.num_seg_classes = std::stoll(value);
      } else if (key == "num_scene_classes") {
        m.num_scene_classes = std::stoll(value);
      } else if (key == "seg_class_names") {
        m.seg_class_names = split(value, ',');
      } else if (key == "scene_class_names") {
        m.scene_class_names = split(value, ',');
      } else if (key == "ignore_index") {
        m.ignore_index = static_cast<int32_t>(std::stol(value));
      } else {
        fail(ErrorCode::Config, "unknown manifest key '" + key + "'");
      }
    } catch (const Error& e) {
      fail(ErrorCode::Config, path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception&) {
      fail(ErrorCode::Config, path + ":" + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  if (m.num_seg_classes < 1 || m.num_scene_classes < 1) {
    fail(ErrorCode::Config, path + ": num_seg_classes and num_scene_classes must be positive");
  }
  auto fill_names = [](std::vector<std::string>& names, int64_t n, const char* stem) {
    if (names.empty()) {
      for (int64_t i = 0; i < n; ++i) names.push_back(std::string(stem) + std::to_string(i));
    }
    return static_cast<int64_t>(names.size()) == n;
  };
  if (!fill_names(m.seg_class_names, m.num_seg_classes, "class") ||
      !fill_names(m.scene_class_names, m.num_scene_classes, "scene")) {
    fail(ErrorCode::Config, path + ": class name count does not match class count");
  }
  return m;
}

void DatasetManifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << "format = mtnet-folder-1\n";
  out << "num_seg_classes = " << num_seg_classes << '\n';
  out << "num_scene_classes = " << num_scene_classes << '\n';
  out << "seg_class_names = " << join(seg_class_names, ",") << '\n';
  out << "scene_class_names = " << join(scene_class_names, ",") << '\n';
  if (ignore_index) out << "ignore_index = " << *ignore_index << '\n';
}

FolderDataset FolderDataset::open(const std::string& root) {
  FolderDataset ds;
  ds.root_ = root;
  ds.manifest_ = DatasetManifest::read((fs::path(root) / "manifest.txt").string());
  const std::string labels_path = (fs::path(root) / "scene_labels.txt").string();
  std::ifstream in(labels_path);
  if (!in) fail(ErrorCode::Io, "missing scene label file " + labels_path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto parts = split(line, ',');
    int32_t label = -1;
    if (parts.size() == 2) {
      try {
        label = static_cast<int32_t>(std::stol(parts[1]));
      } catch (const std::exception&) {
        label = -1;
      }
    }
    if (parts.size() != 2 || parts[0].empty() || label < 0 ||
        label >= ds.manifest_.num_scene_classes) {
      fail(ErrorCode::Config, labels_path + ":" + std::to_string(line_no) +
                                  ": expected '<id>,<scene index in [0, " +
                                  std::to_string(ds.manifest_.num_scene_classes) + ")>'");
    }
    ds.ids_.push_back(parts[0]);
    ds.scene_labels_.push_back(label);
  }
  return ds;
}

Sample FolderDataset::load(size_t i) const {
  Sample s;
  s.id = ids_.at(i);
  s.scene_label = scene_labels_[i];
  const fs::path base(root_);
  const std::string image_path = (base / "images" / (s.id + ".ppm")).string();
  const std::string label_path = (base / "annotations" / (s.id + ".pgm")).string();
  const RgbImage img = read_ppm(image_path);
  s.height = img.height;
  s.width = img.width;
  const int64_t hw = s.height * s.width;
  s.image.resize(static_cast<size_t>(3 * hw));
  for (int64_t p = 0; p < hw; ++p) {
    for (int c = 0; c < 3; ++c) s.image[c * hw + p] = static_cast<float>(img.pixels[p * 3 + c] / 255.0);
  }
  const GrayImage lab = read_pgm(label_path);
  if (lab.width != s.width || lab.height != s.height) {
    fail(ErrorCode::Shape, label_path + ": annotation size does not match image");
  }
  s.seg_label.resize(static_cast<size_t>(hw));
  for (int64_t p = 0; p < hw; ++p) {
    const int32_t v = lab.pixels[p];
    const bool ignored = manifest_.ignore_index && v == *manifest_.ignore_index;
    if (!ignored && v >= manifest_.num_seg_classes) {
      fail(ErrorCode::Config, label_path + ": label value " + std::to_string(v) +
                                  " >= num_seg_classes " + std::to_string(manifest_.num_seg_classes));
    }
    s.seg_label[p] = v;
  }
  const fs::path depth_path = base / "depth" / (s.id + ".pgm");
  if (fs::exists(depth_path)) {
    const GrayImage d = read_pgm(depth_path.string());
    if (d.width != s.width || d.height != s.height) {
      fail(ErrorCode::Shape, depth_path.string() + ": depth size does not match image");
    }
    std::vector<double> depth(static_cast<size_t>(hw));
    for (int64_t p = 0; p < hw; ++p) {
      depth[p] = std::min(kMaxDepthMeters, d.pixels[p] / 1000.0);
    }
    s.depth = std::move(depth);
  }
  return s;
}

std::vector<Sample> FolderDataset::load_all() const {
  std::vector<Sample> out;
  out.reserve(size());
  for (size_t i = 0; i < size(); ++i) out.push_back(load(i));
  return out;
}

void write_folder_dataset(const std::string& root, const DatasetManifest& manifest,
                          const std::vector<Sample>& samples) {
  const fs::path base(root);
  fs::create_directories(base / "images");
  fs::create_directories(base / "annotations");
  manifest.write((base / "manifest.txt").string());
  std::ofstream labels(base / "scene_labels.txt", std::ios::trunc);
  if (!labels) fail(ErrorCode::Io, "cannot write scene labels under " + root);
  for (const auto& s : samples) {
    labels << s.id << ',' << s.scene_label << '\n';
    const int64_t hw = s.height * s.width;
    RgbImage img{s.width, s.height, std::vector<uint8_t>(static_cast<size_t>(3 * hw))};
    for (int64_t p = 0; p < hw; ++p) {
      for (int c = 0; c < 3; ++c) img.pixels[p * 3 + c] = clamp_byte(s.image[c * hw + p] * 255.0);
    }
    write_ppm((base / "images" / (s.id + ".ppm")).string(), img);
    GrayImage lab{s.width, s.height, 255, {}};
    lab.pixels.resize(static_cast<size_t>(hw));
    for (int64_t p = 0; p < hw; ++p) {
      lab.pixels[p] = static_cast<uint16_t>(s.seg_label[p]);
      if (s.seg_label[p] > 255) lab.maxval = 65535;
    }
    write_pgm((base / "annotations" / (s.id + ".pgm")).string(), lab);
    if (s.depth) {
      fs::create_directories(base / "depth");
      GrayImage d{s.width, s.height, 65535, std::vector<uint16_t>(static_cast<size_t>(hw))};
      for (int64_t p = 0; p < hw; ++p) {
        d.pixels[p] = static_cast<uint16_t>(std::lround(std::clamp((*s.depth)[p], 0.0, kMaxDepthMeters) * 1000.0));
      }
      write_pgm((base / "depth" / (s.id + ".pgm")).string(), d);
    }
  }
}

Tensor to_input_tensor(const std::vector<const Sample*>& batch) {
  if (batch.empty()) fail(ErrorCode::InvalidArgument, "empty batch");
  const int64_t h = batch[0]->height, w = batch[0]->width, hw = h * w;
  Tensor t({static_cast<int64_t>(batch.size()), 3, h, w});
  auto v = t.data();
  for (size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->height != h || batch[b]->width != w) {
      fail(ErrorCode::Shape, "batch mixes image sizes");
    }
    for (int c = 0; c < 3; ++c) {
      for (int64_t p = 0; p < hw; ++p) {
        v[(b * 3 + c) * hw + p] = (batch[b]->image[c * hw + p] - kMean[c]) / kStd[c];
      }
    }
  }
  return t;
}

Tensor to_input_tensor(const std::vector<float>& rgb, int64_t height, int64_t width) {
  Sample s;
  s.height = height;
  s.width = width;
  s.image = rgb;
  return to_input_tensor(std::vector<const Sample*>{&s});
}

// ---------------------------------------------------------------------------
// Synthetic shapes

std::vector<SceneRule> parse_scene_rules(const std::string& text,
                                         const std::vector<std::string>& shapes) {
  std::vector<SceneRule> rules;
  for (const auto& item : split(text, ';')) {
    const std::string entry = trim(item);
    if (entry.empty()) continue;
    const auto colon = entry.find(':');
    if (colon == std::string::npos) fail(ErrorCode::Config, "scene rule '" + entry + "' lacks ':<scene>'");
    SceneRule r;
    try {
      r.scene = static_cast<int32_t>(std::stol(trim(entry.substr(colon + 1))));
    } catch (const std::exception&) {
      fail(ErrorCode::Config, "scene rule '" + entry + "' has a non-numeric scene id");
    }
    for (const auto& name : split(entry.substr(0, colon), '+')) {
      const auto it = std::find(shapes.begin(), shapes.end(), trim(name));
      if (it == shapes.end()) fail(ErrorCode::Config, "scene rule names unknown shape '" + trim(name) + "'");
      r.classes.push_back(static_cast<int32_t>(it - shapes.begin()) + 1);
    }
    std::sort(r.classes.begin(), r.classes.end());
    rules.push_back(std::move(r));
  }
  return rules;
}

std::string format_scene_rules(const std::vector<SceneRule>& rules,
                               const std::vector<std::string>& shapes) {
  std::string out;
  for (const auto& r : rules) {
    if (!out.empty()) out += "; ";
    std::vector<std::string> names;
    for (auto c : r.classes) names.push_back(shapes.at(static_cast<size_t>(c - 1)));
    out += join(names, "+") + ":" + std::to_string(r.scene);
  }
  return out;
}

void SyntheticConfig::finalize() {
  if (shapes.empty()) fail(ErrorCode::Config, "synth.shapes must name at least one shape");
  for (const auto& s : shapes) kind_from_name(s);
  if (std::set<std::string>(shapes.begin(), shapes.end()).size() != shapes.size()) {
    fail(ErrorCode::Config, "synth.shapes contains duplicates");
  }
  if (size < 32 || size % 32 != 0) fail(ErrorCode::Config, "synth.size must be a positive multiple of 32");
  if (train_count < 0 || val_count < 0) fail(ErrorCode::Config, "synth counts must be non-negative");
  if (depth_dropout < 0 || depth_dropout >= 1) fail(ErrorCode::Config, "synth.depth_dropout must be in [0, 1)");
  if (rules.empty()) {
    const int32_t n = static_cast<int32_t>(shapes.size());
    int32_t scene = 0;
    if (n == 1) rules.push_back({{1}, 0});
    for (int32_t a = 1; a <= n; ++a) {
      for (int32_t b = a + 1; b <= n; ++b) rules.push_back({{a, b}, scene++});
    }
  }
  std::map<std::vector<int32_t>, int32_t> seen;
  for (const auto& r : rules) {
    if (r.classes.empty()) fail(ErrorCode::Config, "scene rule with no shapes");
    if (std::adjacent_find(r.classes.begin(), r.classes.end()) != r.classes.end()) {
      fail(ErrorCode::Config, "scene rule repeats a shape");
    }
    if (r.scene < 0) fail(ErrorCode::Config, "scene ids must be non-negative");
    const auto [it, inserted] = seen.emplace(r.classes, r.scene);
    if (!inserted && it->second != r.scene) {
      fail(ErrorCode::Config, "contradictory scene rules: the same shape set maps to scenes " +
                                  std::to_string(it->second) + " and " + std::to_string(r.scene));
    }
  }
}

int64_t SyntheticConfig::num_scene_classes() const {
  int32_t mx = -1;
  for (const auto& r : rules) mx = std::max(mx, r.scene);
  return mx + 1;
}

std::vector<std::string> SyntheticConfig::scene_names() const {
  std::vector<std::string> names(static_cast<size_t>(num_scene_classes()));
  for (const auto& r : rules) {
    if (!names[r.scene].empty()) continue;
    std::vector<std::string> parts;
    for (auto c : r.classes) parts.push_back(shapes[c - 1]);
    names[r.scene] = join(parts, "+");
  }
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) names[i] = "scene" + std::to_string(i);
  }
  return names;
}

DatasetManifest SyntheticConfig::manifest() const {
  DatasetManifest m;
  m.num_seg_classes = num_seg_classes();
  m.num_scene_classes = num_scene_classes();
  m.seg_class_names.push_back("background");
  m.seg_class_names.insert(m.seg_class_names.end(), shapes.begin(), shapes.end());
  m.scene_class_names = scene_names();
  return m;
}

bool shape_contains(const ShapeInstance& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy, r = s.radius;
  switch (s.kind) {
    case ShapeKind::Circle: return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square: return std::abs(dx) <= r && std::abs(dy) <= r;
    case ShapeKind::Diamond: return std::abs(dx) + std::abs(dy) <= r;
    case ShapeKind::Triangle: {
      // Equilateral, apex up, circumradius r.
      const double h = std::sqrt(3.0) / 2.0 * r;
      const std::array<std::array<double, 2>, 3> v{{{0.0, -r}, {h, r / 2}, {-h, r / 2}}};
      auto edge = [&](int i, int j) {
        return (v[j][0] - v[i][0]) * (dy - v[i][1]) - (v[j][1] - v[i][1]) * (dx - v[i][0]);
      };
      const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

double shape_area(const ShapeInstance& s) {
  const double r = s.radius;
  switch (s.kind) {
    case ShapeKind::Circle: return std::numbers::pi * r * r;
    case ShapeKind::Square: return 4.0 * r * r;
    case ShapeKind::Diamond: return 2.0 * r * r;
    case ShapeKind::Triangle: return 3.0 * std::sqrt(3.0) / 4.0 * r * r;
  }
  return 0.0;
}

double shape_perimeter(const ShapeInstance& s) {
  const double r = s.radius;
  switch (s.kind) {
    case ShapeKind::Circle: return 2.0 * std::numbers::pi * r;
    case ShapeKind::Square: return 8.0 * r;
    case ShapeKind::Diamond: return 4.0 * std::sqrt(2.0) * r;
    case ShapeKind::Triangle: return 3.0 * std::sqrt(3.0) * r;
  }
  return 0.0;
}

std::optional<int32_t> scene_from_labels(const std::vector<SceneRule>& rules,
                                         const std::vector<int32_t>& seg_label) {
  std::set<int32_t> present;
  for (auto v : seg_label) {
    if (v > 0) present.insert(v);
  }
  const std::vector<int32_t> key(present.begin(), present.end());
  for (const auto& r : rules) {
    if (r.classes == key) return r.scene;
  }
  return std::nullopt;
}

SyntheticSample render_synthetic(const SyntheticConfig& config, int split, int64_t index) {
  const int64_t size = config.size, hw = size * size;
  std::mt19937_64 rng(splitmix(config.seed ^ splitmix(static_cast<uint64_t>(split) << 40 ^ static_cast<uint64_t>(index))));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<size_t> pick_rule(0, config.rules.size() - 1);

  SyntheticSample out;
  Sample& s = out.sample;
  s.id = (split == 0 ? "train_" : "val_") + std::to_string(index);
  s.height = size;
  s.width = size;
  const SceneRule& rule = config.rules[pick_rule(rng)];
  s.scene_label = rule.scene;

  // Layout: retry until every shape keeps at least half its pixels.
  std::vector<int32_t> owner(static_cast<size_t>(hw), -1);
  for (int attempt = 0;; ++attempt) {
    out.shapes.clear();
    for (auto cls : rule.classes) {
      ShapeInstance sh;
      sh.cls = cls;
      sh.kind = kind_from_name(config.shapes[cls - 1]);
      sh.radius = size * (0.12 + 0.10 * unit(rng));
      sh.cx = sh.radius + unit(rng) * (size - 2 * sh.radius);
      sh.cy = sh.radius + unit(rng) * (size - 2 * sh.radius);
      sh.depth = std::round((0.5 + unit(rng) * (kMaxDepthMeters - 0.5)) * 1000.0) / 1000.0;
      out.shapes.push_back(sh);
    }
    std::stable_sort(out.shapes.begin(), out.shapes.end(),
                     [](const ShapeInstance& a, const ShapeInstance& b) { return a.depth > b.depth; });
    std::fill(owner.begin(), owner.end(), -1);
    for (size_t i = 0; i < out.shapes.size(); ++i) {
      auto& sh = out.shapes[i];
      sh.full_pixels = 0;
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          if (shape_contains(sh, x + 0.5, y + 0.5)) {
            owner[y * size + x] = static_cast<int32_t>(i);
            ++sh.full_pixels;
          }
        }
      }
    }
    bool ok = true;
    for (size_t i = 0; i < out.shapes.size(); ++i) {
      out.shapes[i].visible_pixels = std::count(owner.begin(), owner.end(), static_cast<int32_t>(i));
      ok = ok && 2 * out.shapes[i].visible_pixels >= out.shapes[i].full_pixels &&
           out.shapes[i].visible_pixels > 0;
    }
    if (ok) break;
    if (attempt > 1000) fail(ErrorCode::Config, "synthetic layout failed; shapes too large for image");
  }

  // Background: dark noisy texture with a per-image tint.
  std::array<double, 3> bg;
  for (auto& c : bg) c = 40.0 + 60.0 * unit(rng);
  std::array<std::array<double, 3>, 8> colours{};
  for (size_t i = 0; i < out.shapes.size(); ++i) {
    const auto base = base_colour(out.shapes[i].kind);
    for (int c = 0; c < 3; ++c) colours[i][c] = base[c] + 50.0 * (unit(rng) - 0.5);
  }
  s.image.resize(static_cast<size_t>(3 * hw));
  s.seg_label.assign(static_cast<size_t>(hw), 0);
  std::vector<double> depth(static_cast<size_t>(hw), kMaxDepthMeters);
  for (int64_t p = 0; p < hw; ++p) {
    const int32_t o = owner[p];
    for (int c = 0; c < 3; ++c) {
      const double v = (o < 0 ? bg[c] + 60.0 * (unit(rng) - 0.5) : colours[o][c] + 30.0 * (unit(rng) - 0.5));
      s.image[c * hw + p] = static_cast<float>(clamp_byte(v) / 255.0);
    }
    if (o >= 0) {
      s.seg_label[p] = out.shapes[o].cls;
      depth[p] = out.shapes[o].depth;
    }
    if (unit(rng) < config.depth_dropout) depth[p] = 0.0;
  }
  if (config.depth) s.depth = std::move(depth);
  return out;
}

std::vector<SyntheticSample> generate_split(const SyntheticConfig& config, int split) {
  SyntheticConfig c = config;
  c.finalize();
  const int64_t count = split == 0 ? c.train_count : c.val_count;
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) out.push_back(render_synthetic(c, split, i));
  return out;
}

void generate_synthetic(const SyntheticConfig& config, const std::string& out_dir) {
  SyntheticConfig c = config;
  c.finalize();
  const DatasetManifest manifest = c.manifest();
  for (int split = 0; split < 2; ++split) {
    std::vector<Sample> samples;
    for (auto& ss : generate_split(c, split)) samples.push_back(std::move(ss.sample));
    write_folder_dataset((fs::path(out_dir) / (split == 0 ? "train" : "val")).string(), manifest, samples);
  }
}

}  // namespace mtnet
