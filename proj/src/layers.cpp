// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "layers.hpp"

#include <cmath>

#include "error.hpp"
#include "ops.hpp"

namespace mtnet {

void ParameterStore::check_unique(const std::string& name) const {
  if (find(name).defined()) fail(ErrorCode::Internal, "duplicate tensor name " + name);
}

Tensor ParameterStore::add_parameter(const std::string& name, Shape shape,
                                     std::vector<double> init) {
  check_unique(name);
  Tensor t(std::move(shape), std::move(init));
  t.set_requires_grad(true);
  parameters_.push_back({name, t});
  return t;
}

Tensor ParameterStore::add_buffer(const std::string& name, Shape shape, double fill) {
  check_unique(name);
  Tensor t(std::move(shape), fill);
  buffers_.push_back({name, t});
  return t;
}

std::vector<NamedTensor> ParameterStore::all() const {
  std::vector<NamedTensor> out = parameters_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

Tensor ParameterStore::find(const std::string& name) const {
  for (const auto& p : parameters_) {
    if (p.name == name) return p.tensor;
  }
  for (const auto& b : buffers_) {
    if (b.name == name) return b.tensor;
  }
  return {};
}

int64_t ParameterStore::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : parameters_) p.tensor.zero_grad();
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int64_t in_channels,
               int64_t out_channels, int kernel, int stride_, int pad_, bool with_bias, Rng& rng)
    : stride(stride_), pad(pad_) {
  const int64_t fan_in = in_channels * kernel * kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> w(static_cast<size_t>(out_channels * fan_in));
  for (auto& v : w) v = dist(rng);
  weight = store.add_parameter(name + ".weight", {out_channels, in_channels, kernel, kernel},
                               std::move(w));
  if (with_bias) {
    bias = store.add_parameter(name + ".bias", {out_channels},
                               std::vector<double>(static_cast<size_t>(out_channels), 0.0));
  }
}

Tensor Conv2d::operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

BatchNorm2d::BatchNorm2d(ParameterStore& store, const std::string& name, int64_t channels)
    : mode_(store.mode()) {
  gamma = store.add_parameter(name + ".gamma", {channels},
                              std::vector<double>(static_cast<size_t>(channels), 1.0));
  beta = store.add_parameter(name + ".beta", {channels},
                             std::vector<double>(static_cast<size_t>(channels), 0.0));
  running_mean = store.add_buffer(name + ".running_mean", {channels}, 0.0);
  running_var = store.add_buffer(name + ".running_var", {channels}, 1.0);
}

Tensor BatchNorm2d::operator()(const Tensor& x) const {
  const bool training = mode_->training;
  return ops::batch_norm(x, gamma, beta, {running_mean, running_var}, training,
                         training && !mode_->freeze_norm_stats && grad_enabled());
}

Linear::Linear(ParameterStore& store, const std::string& name, int64_t in_features,
               int64_t out_features, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(static_cast<size_t>(in_features * out_features));
  for (auto& v : w) v = dist(rng);
  weight = store.add_parameter(name + ".weight", {out_features, in_features}, std::move(w));
  bias = store.add_parameter(name + ".bias", {out_features},
                             std::vector<double>(static_cast<size_t>(out_features), 0.0));
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

}  // namespace mtnet
