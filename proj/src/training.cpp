// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "checkpoint.hpp"
#include "config.hpp"
#include "error.hpp"
#include "ops.hpp"

namespace fs = std::filesystem;

namespace mtnet {

void LossWeights::validate() const {
  if (lambda1 < 0 || lambda2 < 0) fail(ErrorCode::Config, "loss weights must be non-negative");
  if (lambda1 == 0 && lambda2 == 0) fail(ErrorCode::Config, "loss weights cannot both be zero");
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (p < 0 || p > 1) fail(ErrorCode::Config, std::string(name) + " must be in [0, 1]");
  };
  prob(flip_prob, "train.flip_prob");
  prob(blur_prob, "train.blur_prob");
  prob(contrast_prob, "train.contrast_prob");
  if (scale_min <= 0 || scale_max < scale_min) {
    fail(ErrorCode::Config, "train.scale_min/scale_max must satisfy 0 < min <= max");
  }
}

void TrainConfig::validate() const {
  if (crop < 32 || crop % 32 != 0) fail(ErrorCode::Config, "train.crop must be a positive multiple of 32");
  if (epochs < 1) fail(ErrorCode::Config, "train.epochs must be positive");
  if (batch_size < 1) fail(ErrorCode::Config, "train.batch_size must be positive");
  if (lr0 < 0 || weight_decay < 0) fail(ErrorCode::Config, "train.lr0 and train.weight_decay must be non-negative");
  augment.validate();
}

// ---------------------------------------------------------------------------
// Losses and schedule

Tensor seg_loss(const Tensor& seg_logits, std::span<const int32_t> labels, int32_t ignore_index,
                bool* all_ignored) {
  return ops::seg_cross_entropy(seg_logits, labels, ignore_index, all_ignored);
}

Tensor scene_loss(const Tensor& scene_log_probs, std::span<const int32_t> labels) {
  return ops::nll_loss(scene_log_probs, labels);
}

Tensor joint_loss(const Tensor& l1, const Tensor& l2, const LossWeights& w) {
  return ops::axpby(l1, w.lambda1, l2, w.lambda2);
}

double joint_loss(double l1, double l2, const LossWeights& w) { return w.lambda1 * l1 + w.lambda2 * l2; }

double cosine_lr(int64_t step, int64_t total_steps, double lr0) {
  if (total_steps <= 0) return lr0;
  const double t = static_cast<double>(std::clamp<int64_t>(step, 0, total_steps)) / total_steps;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

AdamW::AdamW(std::vector<Tensor> params, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < w.size(); ++j) {
      w[j] -= lr * wd_ * w[j];
      m[j] = beta1_ * m[j] + (1 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

std::vector<float> gaussian_blur(const std::vector<float>& img, int64_t h, int64_t w, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(2 * sigma)));
  std::vector<double> k(2 * r + 1);
  double total = 0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& x : k) x /= total;
  std::vector<float> tmp(img.size()), out(img.size());
  for (int64_t c = 0; c < 3; ++c) {
    const float* src = img.data() + c * h * w;
    float* t = tmp.data() + c * h * w;
    float* o = out.data() + c * h * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * src[y * w + std::clamp<int64_t>(x + i, 0, w - 1)];
        t[y * w + x] = static_cast<float>(acc);
      }
    }
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * t[std::clamp<int64_t>(y + i, 0, h - 1) * w + x];
        o[y * w + x] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

}  // namespace

Sample augment(const Sample& in, int64_t crop, const AugmentConfig& config, std::mt19937_64& rng) {
  if (crop < 1) fail(ErrorCode::InvalidArgument, "augment: crop must be positive");
  if (in.height < 1 || in.width < 1) fail(ErrorCode::Shape, "augment: empty image " + in.id);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int64_t h = in.height, w = in.width, side = std::min(h, w);
  // Images smaller than the crop are upscaled until the short side fits.
  const int64_t base = side >= crop ? crop : side;
  int64_t window = base;
  bool flip = false;
  int64_t y0 = (h - base) / 2, x0 = (w - base) / 2;
  if (config.enabled) {
    const double s = config.scale_min + unit(rng) * (config.scale_max - config.scale_min);
    window = std::clamp<int64_t>(std::llround(base / s), 1, side);
    y0 = std::uniform_int_distribution<int64_t>(0, h - window)(rng);
    x0 = std::uniform_int_distribution<int64_t>(0, w - window)(rng);
    flip = unit(rng) < config.flip_prob;
  }
  const double step = static_cast<double>(window) / crop;

  Sample out;
  out.id = in.id;
  out.height = crop;
  out.width = crop;
  out.scene_label = in.scene_label;
  out.image.resize(static_cast<size_t>(3 * crop * crop));
  out.seg_label.resize(static_cast<size_t>(crop * crop));
  if (in.depth) out.depth = std::vector<double>(static_cast<size_t>(crop * crop));

  for (int64_t oy = 0; oy < crop; ++oy) {
    const double sy = y0 + (oy + 0.5) * step - 0.5;
    const int64_t ny = std::clamp<int64_t>(y0 + static_cast<int64_t>((oy + 0.5) * step), y0, y0 + window - 1);
    const double fy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const int64_t iy0 = static_cast<int64_t>(std::floor(fy)), iy1 = std::min(iy0 + 1, h - 1);
    const double wy = fy - iy0;
    for (int64_t ox = 0; ox < crop; ++ox) {
      const int64_t tx = flip ? crop - 1 - ox : ox;
      const double sx = x0 + (tx + 0.5) * step - 0.5;
      const int64_t nx = std::clamp<int64_t>(x0 + static_cast<int64_t>((tx + 0.5) * step), x0, x0 + window - 1);
      const double fx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const int64_t ix0 = static_cast<int64_t>(std::floor(fx)), ix1 = std::min(ix0 + 1, w - 1);
      const double wx = fx - ix0;
      const int64_t o = oy * crop + ox;
      for (int64_t c = 0; c < 3; ++c) {
        const float* p = in.image.data() + c * h * w;
        const double top = p[iy0 * w + ix0] * (1 - wx) + p[iy0 * w + ix1] * wx;
        const double bot = p[iy1 * w + ix0] * (1 - wx) + p[iy1 * w + ix1] * wx;
        out.image[c * crop * crop + o] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
      out.seg_label[o] = in.seg_label[ny * w + nx];
      if (in.depth) (*out.depth)[o] = (*in.depth)[ny * w + nx];
    }
  }

  if (config.enabled && unit(rng) < config.blur_prob) {
    const double sigma = 0.3 + unit(rng) * 0.9;
    out.image = gaussian_blur(out.image, crop, crop, sigma);
  }
  if (config.enabled && unit(rng) < config.contrast_prob) {
    const double factor = 0.7 + unit(rng) * 0.6;
    const double mean = std::accumulate(out.image.begin(), out.image.end(), 0.0) / out.image.size();
    for (auto& v : out.image) v = static_cast<float>(std::clamp(mean + factor * (v - mean), 0.0, 1.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data sources and logs

SampleSource SampleSource::from_vector(const std::vector<Sample>& samples) {
  return {samples.size(), [&samples](size_t i) { return samples.at(i); }};
}

SampleSource SampleSource::from_folder(const FolderDataset& dataset) {
  return {dataset.size(), [&dataset](size_t i) { return dataset.load(i); }};
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j = metrics.to_json();
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["seg_loss"] = seg_loss;
  j["scene_loss"] = scene_loss;
  j["lr"] = lr;
  return j;
}

EpochRecord EpochRecord::from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.loss = j.value("loss", 0.0);
  r.seg_loss = j.value("seg_loss", 0.0);
  r.scene_loss = j.value("scene_loss", 0.0);
  r.lr = j.value("lr", 0.0);
  r.metrics.miou = j.at("miou").get<double>();
  r.metrics.mca = j.at("mca").get<double>();
  r.metrics.pixel_acc = j.value("pixel_acc", 0.0);
  for (int k : {1, 2, 5}) r.metrics.topk[k] = j.value("top" + std::to_string(k), 0.0);
  return r;
}

void TrainingLog::write(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write training log " + path);
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

TrainingLog TrainingLog::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read training log " + path);
  TrainingLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      log.records.push_back(EpochRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Config, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

int select_checkpoint(const TrainingLog& log) {
  if (log.records.empty()) fail(ErrorCode::InvalidArgument, "select_checkpoint: empty training log");
  size_t best = 0;
  for (size_t i = 1; i < log.records.size(); ++i) {
    const auto& a = log.records[i].metrics;
    const auto& b = log.records[best].metrics;
    if (a.miou + a.mca > b.miou + b.mca) best = i;
  }
  return log.records[best].epoch;
}

// ---------------------------------------------------------------------------
// Evaluation and training

namespace {

struct ModeRestore {
  JointModel* model;
  bool previous;
  ~ModeRestore() { model->set_training(previous); }
};

std::vector<int32_t> argmax_map(const Tensor& logits) {
  const int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const auto v = logits.data();
  std::vector<int32_t> out(static_cast<size_t>(n * hw));
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t p = 0; p < hw; ++p) {
      int32_t best = 0;
      double bv = v[b * k * hw + p];
      for (int64_t c = 1; c < k; ++c) {
        const double x = v[(b * k + c) * hw + p];
        if (x > bv) {
          bv = x;
          best = static_cast<int32_t>(c);
        }
      }
      out[b * hw + p] = best;
    }
  }
  return out;
}

int64_t round32(int64_t v) { return std::max<int64_t>(32, (v + 16) / 32 * 32); }

}  // namespace

EvalResult evaluate(const JointModel& model, const SampleSource& data, int32_t ignore_index,
                    int batch_size, const GateOverride& gate) {
  auto& m = const_cast<JointModel&>(model);
  ModeRestore restore{&m, m.training()};
  m.set_training(false);
  NoGradGuard no_grad;

  const int64_t k_seg = model.config().seg.num_classes;
  const int64_t k_scene = model.config().recog.num_classes;
  SegConfusion confusion(k_seg);
  EvalResult result;
  std::vector<Sample> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    std::vector<const Sample*> ptrs;
    for (const auto& s : pending) ptrs.push_back(&s);
    const int64_t h = pending[0].height, w = pending[0].width;
    Tensor input = to_input_tensor(ptrs);
    const int64_t th = round32(h), tw = round32(w);
    if (th != h || tw != w) input = ops::upsample_bilinear(input, th, tw);
    const auto out = model.forward(input, gate);
    Tensor logits = out.seg.logits;
    if (th != h || tw != w) logits = ops::upsample_bilinear(logits, h, w);
    const auto pred = argmax_map(logits);
    const auto y = out.recog.scene.y.data();
    for (size_t b = 0; b < pending.size(); ++b) {
      const auto& s = pending[b];
      confusion.accumulate(std::span<const int32_t>(pred).subspan(b * h * w, h * w), s.seg_label,
                           ignore_index);
      for (int64_t c = 0; c < k_scene; ++c) result.scene_probs.push_back(std::exp(y[b * k_scene + c]));
      result.scene_labels.push_back(s.scene_label);
    }
    pending.clear();
  };
  for (size_t i = 0; i < data.size; ++i) {
    Sample s = data.get(i);
    if (!pending.empty() &&
        (s.height != pending[0].height || s.width != pending[0].width ||
         static_cast<int>(pending.size()) >= batch_size)) {
      flush();
    }
    pending.push_back(std::move(s));
  }
  flush();
  result.metrics = make_report(confusion, result.scene_probs, k_scene, result.scene_labels);
  return result;
}

TrainingLog fit(JointModel& model, const SampleSource& train, const SampleSource& val,
                const TrainConfig& config, const LossWeights& weights, const FitOptions& options) {
  config.validate();
  weights.validate();
  if (train.size == 0) fail(ErrorCode::InvalidArgument, "fit: training set is empty");
  const SampleSource& eval_set = val.size > 0 ? val : train;

  std::vector<Tensor> params;
  for (const auto& p : model.store().parameters()) params.push_back(p.tensor);
  AdamW opt(params, config.weight_decay);
  std::mt19937_64 rng(config.seed);

  const int64_t steps_per_epoch = (static_cast<int64_t>(train.size) + config.batch_size - 1) / config.batch_size;
  const int64_t total_steps = steps_per_epoch * config.epochs;
  int64_t step = 0;

  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);
  const auto path = [&](const char* name) { return (fs::path(options.out_dir) / name).string(); };

  TrainingLog log;
  double best_score = -1.0;
  std::vector<size_t> order(train.size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    model.set_training(true);
    double sum_loss = 0, sum_l1 = 0, sum_l2 = 0, lr = config.lr0;
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<Sample> batch;
      std::vector<int32_t> seg_labels, scene_labels;
      const size_t end = std::min(train.size, static_cast<size_t>((b + 1) * config.batch_size));
      for (size_t i = static_cast<size_t>(b * config.batch_size); i < end; ++i) {
        batch.push_back(augment(train.get(order[i]), config.crop, config.augment, rng));
        seg_labels.insert(seg_labels.end(), batch.back().seg_label.begin(), batch.back().seg_label.end());
        scene_labels.push_back(batch.back().scene_label);
      }
      std::vector<const Sample*> ptrs;
      for (const auto& s : batch) ptrs.push_back(&s);
      const auto out = model.forward(to_input_tensor(ptrs));
      const Tensor l1 = seg_loss(out.seg.logits, seg_labels, config.ignore_index);
      const Tensor l2 = scene_loss(out.recog.scene.y, scene_labels);
      const Tensor loss = joint_loss(l1, l2, weights);
      if (!std::isfinite(loss.item())) {
        fail(ErrorCode::Numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b) + " (first sample " + batch.front().id + ")");
      }
      opt.zero_grad();
      backward(loss);
      lr = cosine_lr(step, total_steps, config.lr0);
      opt.step(lr);
      ++step;
      sum_loss += loss.item();
      sum_l1 += l1.item();
      sum_l2 += l2.item();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = sum_loss / steps_per_epoch;
    rec.seg_loss = sum_l1 / steps_per_epoch;
    rec.scene_loss = sum_l2 / steps_per_epoch;
    rec.lr = lr;
    rec.metrics = evaluate(model, eval_set, config.ignore_index, config.batch_size).metrics;
    log.records.push_back(rec);

    if (!options.out_dir.empty()) {
      log.write(path("train_log.jsonl"));
      CheckpointInfo info{epoch, rec.metrics.miou, rec.metrics.mca, architecture_hash(model.config()),
                          options.config_text, options.seg_class_names, options.scene_class_names};
      save_checkpoint(path("last.ckpt"), model, info);
      if (rec.metrics.miou + rec.metrics.mca > best_score) save_checkpoint(path("best.ckpt"), model, info);
    }
    best_score = std::max(best_score, rec.metrics.miou + rec.metrics.mca);
    if (options.on_epoch) options.on_epoch(rec);
  }
  return log;
}

}  // namespace mtnet
