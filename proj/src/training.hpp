// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "datasets.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace mtnet {

struct LossWeights {
  double lambda1 = 1.0;  // segmentation
  double lambda2 = 1.0;  // scene

  void validate() const;
};

struct AugmentConfig {
  bool enabled = true;
  double flip_prob = 0.5;
  double scale_min = 0.75;
  double scale_max = 1.25;
  double blur_prob = 0.2;
  double contrast_prob = 0.3;

  void validate() const;
};

struct TrainConfig {
  int64_t crop = 384;
  double lr0 = 1.0e-4;
  double weight_decay = 2.5e-5;
  int epochs = 1;
  int batch_size = 8;
  uint64_t seed = 0;
  /// Pixels with this label are excluded from the segmentation loss and
  /// metrics; -1 disables. A dataset manifest's ignore_index takes priority.
  int32_t ignore_index = -1;
  AugmentConfig augment;

  void validate() const;
};

/// Mean per-pixel NLL of softmax(logits) over non-ignored pixels. When every
/// pixel is ignored the loss is 0 and *all_ignored is set.
Tensor seg_loss(const Tensor& seg_logits, std::span<const int32_t> labels, int32_t ignore_index,
                bool* all_ignored = nullptr);
/// Batch-mean NLL of the labelled class under log-posteriors y.
Tensor scene_loss(const Tensor& scene_log_probs, std::span<const int32_t> labels);
Tensor joint_loss(const Tensor& l1, const Tensor& l2, const LossWeights& w);
double joint_loss(double l1, double l2, const LossWeights& w);

double cosine_lr(int64_t step, int64_t total_steps, double lr0);

/// Adaptive-moment optimizer with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  void step(double lr);
  void zero_grad();
  int64_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

/// One geometric/photometric draw applied to a sample. The output is
/// crop x crop; labels are resampled by nearest neighbour.
Sample augment(const Sample& in, int64_t crop, const AugmentConfig& config, std::mt19937_64& rng);

/// Random-access sample provider.
struct SampleSource {
  size_t size = 0;
  std::function<Sample(size_t)> get;

  static SampleSource from_vector(const std::vector<Sample>& samples);
  static SampleSource from_folder(const FolderDataset& dataset);
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double seg_loss = 0.0;
  double scene_loss = 0.0;
  double lr = 0.0;
  MetricsReport metrics;

  nlohmann::json to_json() const;
  static EpochRecord from_json(const nlohmann::json& j);
};

struct TrainingLog {
  std::vector<EpochRecord> records;

  /// One JSON object per line.
  void write(const std::string& path) const;
  static TrainingLog read(const std::string& path);
};

/// argmax over records of miou + mca; ties resolve to the earliest epoch.
int select_checkpoint(const TrainingLog& log);

struct EvalResult {
  MetricsReport metrics;
  /// Row-major [N, K_scene] posteriors exp(y).
  std::vector<double> scene_probs;
  std::vector<int32_t> scene_labels;
};

/// Evaluates in inference mode. Images whose sides are not multiples of 32
/// are resized for the forward pass and the logits resized back.
EvalResult evaluate(const JointModel& model, const SampleSource& data, int32_t ignore_index,
                    int batch_size = 8, const GateOverride& gate = {});

struct FitOptions {
  /// Receives best.ckpt, last.ckpt and train_log.jsonl when non-empty.
  std::string out_dir;
  /// Stored in checkpoints for reconstruction.
  std::string config_text;
  std::vector<std::string> seg_class_names;
  std::vector<std::string> scene_class_names;
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainingLog fit(JointModel& model, const SampleSource& train, const SampleSource& val,
                const TrainConfig& config, const LossWeights& weights,
                const FitOptions& options = {});

}  // namespace mtnet
