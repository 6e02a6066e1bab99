// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mtnet {

/// Depth values are metres; anything above this is clipped by the sensor.
inline constexpr double kMaxDepthMeters = 9.0;

struct Sample {
  std::string id;
  int64_t height = 0;
  int64_t width = 0;
  /// RGB planes [3, H, W], values in [0, 1].
  std::vector<float> image;
  /// [H, W] class indices (or the dataset's ignore index).
  std::vector<int32_t> seg_label;
  int32_t scene_label = 0;
  /// [H, W] metres, 0 = no reading.
  std::optional<std::vector<double>> depth;
};

struct DatasetManifest {
  int64_t num_seg_classes = 0;
  int64_t num_scene_classes = 0;
  std::vector<std::string> seg_class_names;
  std::vector<std::string> scene_class_names;
  /// Label value excluded from scoring, if the dataset uses one.
  std::optional<int32_t> ignore_index;

  static DatasetManifest read(const std::string& path);
  void write(const std::string& path) const;
};

/// Folder layout:
///   manifest.txt          key = value lines (see DatasetManifest)
///   scene_labels.txt      "<id>,<scene index>" per line, defines the sample order
///   images/<id>.ppm       8-bit RGB
///   annotations/<id>.pgm  8/16-bit class indices
///   depth/<id>.pgm        optional, 16-bit millimetres, 0 = invalid
class FolderDataset {
 public:
  static FolderDataset open(const std::string& root);

  size_t size() const { return ids_.size(); }
  const std::string& id(size_t i) const { return ids_.at(i); }
  const DatasetManifest& manifest() const { return manifest_; }
  const std::string& root() const { return root_; }

  /// Reads and validates one sample.
  Sample load(size_t i) const;
  std::vector<Sample> load_all() const;

 private:
  std::string root_;
  DatasetManifest manifest_;
  std::vector<std::string> ids_;
  std::vector<int32_t> scene_labels_;
};

/// Writes samples in the folder layout; depth maps are stored when present.
void write_folder_dataset(const std::string& root, const DatasetManifest& manifest,
                          const std::vector<Sample>& samples);

/// Converts a batch of samples into a normalized NCHW input tensor.
Tensor to_input_tensor(const std::vector<const Sample*>& batch);
/// Single image, [3, H, W] floats in [0, 1].
Tensor to_input_tensor(const std::vector<float>& rgb, int64_t height, int64_t width);

// ---------------------------------------------------------------------------
// Synthetic shapes dataset

enum class ShapeKind { Circle, Square, Triangle, Diamond };

struct SceneRule {
  std::vector<int32_t> classes;  // sorted segmentation class ids (1-based)
  int32_t scene = 0;
};

struct SyntheticConfig {
  std::vector<std::string> shapes{"circle", "square", "triangle", "diamond"};
  /// Empty means one scene per unordered pair of shapes.
  std::vector<SceneRule> rules;
  int64_t size = 64;
  int64_t train_count = 600;
  int64_t val_count = 200;
  uint64_t seed = 0;
  bool depth = true;
  double depth_dropout = 0.01;

  /// Fills default rules and checks consistency.
  void finalize();
  int64_t num_seg_classes() const { return static_cast<int64_t>(shapes.size()) + 1; }
  int64_t num_scene_classes() const;
  std::vector<std::string> scene_names() const;
  DatasetManifest manifest() const;
};

/// Parses "circle+square:0; triangle:1" against the shape vocabulary.
std::vector<SceneRule> parse_scene_rules(const std::string& text,
                                         const std::vector<std::string>& shapes);
std::string format_scene_rules(const std::vector<SceneRule>& rules,
                               const std::vector<std::string>& shapes);

struct ShapeInstance {
  int32_t cls = 0;  // segmentation class (1-based)
  ShapeKind kind = ShapeKind::Circle;
  double cx = 0, cy = 0, radius = 0;
  double depth = 0;  // metres, quantized to millimetres
  int64_t visible_pixels = 0;
  int64_t full_pixels = 0;
};

bool shape_contains(const ShapeInstance& s, double x, double y);
double shape_area(const ShapeInstance& s);
double shape_perimeter(const ShapeInstance& s);
/// Scene id for the set of classes present in a label map, if a rule matches.
std::optional<int32_t> scene_from_labels(const std::vector<SceneRule>& rules,
                                         const std::vector<int32_t>& seg_label);

struct SyntheticSample {
  Sample sample;
  std::vector<ShapeInstance> shapes;  // far to near
};

/// `split` is 0 for train, 1 for val.
SyntheticSample render_synthetic(const SyntheticConfig& config, int split, int64_t index);
std::vector<SyntheticSample> generate_split(const SyntheticConfig& config, int split);
/// Writes <out>/train and <out>/val folder datasets.
void generate_synthetic(const SyntheticConfig& config, const std::string& out_dir);

}  // namespace mtnet
