// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mtnet {

using Rng = std::mt19937_64;

/// Train/eval switches shared by a store and the layers built from it.
struct RunMode {
  bool training = false;
  bool freeze_norm_stats = false;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Owns every trainable parameter and running buffer of a model under a
/// dotted name. Layers keep handles into the same storage.
class ParameterStore {
 public:
  Tensor add_parameter(const std::string& name, Shape shape, std::vector<double> init);
  Tensor add_buffer(const std::string& name, Shape shape, double fill);

  const std::vector<NamedTensor>& parameters() const { return parameters_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  /// Parameters followed by buffers.
  std::vector<NamedTensor> all() const;
  Tensor find(const std::string& name) const;

  int64_t parameter_count() const;
  void zero_grad();

  bool training() const { return mode_->training; }
  void set_training(bool on) { mode_->training = on; }
  /// Running statistics stay fixed during training when set.
  bool freeze_norm_stats() const { return mode_->freeze_norm_stats; }
  void set_freeze_norm_stats(bool on) { mode_->freeze_norm_stats = on; }
  std::shared_ptr<const RunMode> mode() const { return mode_; }

 private:
  void check_unique(const std::string& name) const;

  std::vector<NamedTensor> parameters_;
  std::vector<NamedTensor> buffers_;
  std::shared_ptr<RunMode> mode_ = std::make_shared<RunMode>();
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int64_t in_channels,
         int64_t out_channels, int kernel, int stride, int pad, bool bias, Rng& rng);

  Tensor operator()(const Tensor& x) const;

  Tensor weight;
  Tensor bias;
  int stride = 1;
  int pad = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore& store, const std::string& name, int64_t channels);

  Tensor operator()(const Tensor& x) const;

  Tensor gamma;
  Tensor beta;
  mutable Tensor running_mean;
  mutable Tensor running_var;

 private:
  std::shared_ptr<const RunMode> mode_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int64_t in_features,
         int64_t out_features, Rng& rng);

  Tensor operator()(const Tensor& x) const;

  Tensor weight;
  Tensor bias;
};

}  // namespace mtnet
