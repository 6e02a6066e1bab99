// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

namespace mtnet {

/// K x K pixel counts; entry (i, j) counts pixels of true class i predicted
/// as j. Confusions from disjoint batches merge by addition.
class SegConfusion {
 public:
  explicit SegConfusion(int64_t num_classes);

  void accumulate(std::span<const int32_t> pred, std::span<const int32_t> truth,
                  int32_t ignore_index);
  void merge(const SegConfusion& other);

  int64_t num_classes() const { return k_; }
  int64_t at(int64_t truth, int64_t pred) const { return counts_[truth * k_ + pred]; }
  int64_t total() const;
  const std::vector<int64_t>& counts() const { return counts_; }

 private:
  int64_t k_;
  std::vector<int64_t> counts_;
};

/// IoU per class; NaN where the class is absent from truth and prediction.
std::vector<double> per_class_iou(const SegConfusion& c);
/// Mean IoU over classes with a nonzero union.
double miou(const SegConfusion& c);
double pixel_accuracy(const SegConfusion& c);

/// Fraction of rows whose label is among the k highest scores. `scores` is
/// row-major [labels.size(), num_classes]; ties rank the lower index first.
double topk_accuracy(std::span<const double> scores, int64_t num_classes,
                     std::span<const int32_t> labels, int k);
/// Top-1 accuracy per class; NaN for classes absent from `labels`.
std::vector<double> per_class_top1(std::span<const double> scores, int64_t num_classes,
                                   std::span<const int32_t> labels);
/// Unweighted mean of per-class Top-1 over classes present in `labels`.
double mean_class_accuracy(std::span<const double> scores, int64_t num_classes,
                           std::span<const int32_t> labels);

struct MetricsReport {
  double miou = 0.0;
  double pixel_acc = 0.0;
  std::map<int, double> topk;  // k -> accuracy for k in {1, 2, 5}
  double mca = 0.0;
  std::vector<double> per_class_iou;
  std::vector<double> per_class_top1;

  double top(int k) const { return topk.at(k); }
  /// Keys: miou, pixel_acc, top1, top2, top5, mca, per_class_iou, per_class_top1.
  nlohmann::json to_json() const;
};

/// k larger than the class count is evaluated at k = num_classes.
MetricsReport make_report(const SegConfusion& confusion, std::span<const double> scene_scores,
                          int64_t num_scene_classes, std::span<const int32_t> scene_labels);

}  // namespace mtnet
