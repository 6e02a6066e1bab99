// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"

namespace mtnet {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_scores(std::span<const double> scores, int64_t k, std::span<const int32_t> labels) {
  if (k < 1 || static_cast<int64_t>(scores.size()) != k * static_cast<int64_t>(labels.size())) {
    fail(ErrorCode::Shape, "scene scores size " + std::to_string(scores.size()) + " does not match " +
                               std::to_string(labels.size()) + " labels x " + std::to_string(k) +
                               " classes");
  }
  for (auto l : labels) {
    if (l < 0 || l >= k) fail(ErrorCode::InvalidArgument, "scene label " + std::to_string(l) + " out of range");
  }
}

// Position of `label` in the descending score order, lower index first on ties.
int64_t rank_of(const double* row, int64_t k, int32_t label) {
  int64_t r = 0;
  for (int64_t j = 0; j < k; ++j) {
    if (row[j] > row[label] || (row[j] == row[label] && j < label)) ++r;
  }
  return r;
}
}  // namespace

SegConfusion::SegConfusion(int64_t num_classes)
    : k_(num_classes), counts_(static_cast<size_t>(num_classes * num_classes), 0) {
  if (num_classes < 1) fail(ErrorCode::InvalidArgument, "confusion needs at least one class");
}

void SegConfusion::accumulate(std::span<const int32_t> pred, std::span<const int32_t> truth,
                              int32_t ignore_index) {
  if (pred.size() != truth.size()) {
    fail(ErrorCode::Shape, "accumulate: prediction has " + std::to_string(pred.size()) +
                               " pixels, truth has " + std::to_string(truth.size()));
  }
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore_index) continue;
    if (truth[i] < 0 || truth[i] >= k_ || pred[i] < 0 || pred[i] >= k_) {
      fail(ErrorCode::InvalidArgument, "accumulate: label out of range at pixel " + std::to_string(i));
    }
    ++counts_[truth[i] * k_ + pred[i]];
  }
}

void SegConfusion::merge(const SegConfusion& other) {
  if (other.k_ != k_) fail(ErrorCode::Shape, "merge: class counts differ");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

int64_t SegConfusion::total() const {
  int64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::vector<double> per_class_iou(const SegConfusion& c) {
  const int64_t k = c.num_classes();
  std::vector<double> out(static_cast<size_t>(k), kNaN);
  for (int64_t i = 0; i < k; ++i) {
    int64_t row = 0, col = 0;
    for (int64_t j = 0; j < k; ++j) {
      row += c.at(i, j);
      col += c.at(j, i);
    }
    const int64_t tp = c.at(i, i);
    const int64_t uni = row + col - tp;
    if (uni > 0) out[i] = static_cast<double>(tp) / static_cast<double>(uni);
  }
  return out;
}

double miou(const SegConfusion& c) {
  if (c.total() == 0) fail(ErrorCode::InvalidArgument, "miou: empty confusion matrix");
  double s = 0.0;
  int n = 0;
  for (double v : per_class_iou(c)) {
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  return s / n;
}

double pixel_accuracy(const SegConfusion& c) {
  const int64_t total = c.total();
  if (total == 0) fail(ErrorCode::InvalidArgument, "pixel_accuracy: empty confusion matrix");
  int64_t tr = 0;
  for (int64_t i = 0; i < c.num_classes(); ++i) tr += c.at(i, i);
  return static_cast<double>(tr) / static_cast<double>(total);
}

double topk_accuracy(std::span<const double> scores, int64_t num_classes,
                     std::span<const int32_t> labels, int k) {
  check_scores(scores, num_classes, labels);
  if (labels.empty()) fail(ErrorCode::InvalidArgument, "topk_accuracy: empty batch");
  if (k < 1 || k > num_classes) {
    fail(ErrorCode::InvalidArgument, "topk_accuracy: k = " + std::to_string(k) +
                                         " outside [1, " + std::to_string(num_classes) + "]");
  }
  int64_t hit = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (rank_of(scores.data() + i * num_classes, num_classes, labels[i]) < k) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::vector<double> per_class_top1(std::span<const double> scores, int64_t num_classes,
                                   std::span<const int32_t> labels) {
  check_scores(scores, num_classes, labels);
  std::vector<int64_t> hits(static_cast<size_t>(num_classes), 0), seen(static_cast<size_t>(num_classes), 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    ++seen[labels[i]];
    if (rank_of(scores.data() + i * num_classes, num_classes, labels[i]) == 0) ++hits[labels[i]];
  }
  std::vector<double> out(static_cast<size_t>(num_classes), kNaN);
  for (int64_t c = 0; c < num_classes; ++c) {
    if (seen[c] > 0) out[c] = static_cast<double>(hits[c]) / static_cast<double>(seen[c]);
  }
  return out;
}

double mean_class_accuracy(std::span<const double> scores, int64_t num_classes,
                           std::span<const int32_t> labels) {
  if (labels.empty()) fail(ErrorCode::InvalidArgument, "mca: empty batch");
  double s = 0.0;
  int n = 0;
  for (double v : per_class_top1(scores, num_classes, labels)) {
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  return s / n;
}

nlohmann::json MetricsReport::to_json() const {
  auto vec = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
    return a;
  };
  nlohmann::json j;
  j["miou"] = miou;
  j["pixel_acc"] = pixel_acc;
  j["top1"] = topk.at(1);
  j["top2"] = topk.at(2);
  j["top5"] = topk.at(5);
  j["mca"] = mca;
  j["per_class_iou"] = vec(per_class_iou);
  j["per_class_top1"] = vec(per_class_top1);
  return j;
}

MetricsReport make_report(const SegConfusion& confusion, std::span<const double> scene_scores,
                          int64_t num_scene_classes, std::span<const int32_t> scene_labels) {
  MetricsReport r;
  r.miou = miou(confusion);
  r.pixel_acc = pixel_accuracy(confusion);
  r.per_class_iou = per_class_iou(confusion);
  for (int k : {1, 2, 5}) {
    const int kk = static_cast<int>(std::min<int64_t>(k, num_scene_classes));
    r.topk[k] = topk_accuracy(scene_scores, num_scene_classes, scene_labels, kk);
  }
  r.mca = mean_class_accuracy(scene_scores, num_scene_classes, scene_labels);
  r.per_class_top1 = per_class_top1(scene_scores, num_scene_classes, scene_labels);
  return r;
}

}  // namespace mtnet
