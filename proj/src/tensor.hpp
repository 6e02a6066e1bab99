// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mtnet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 tensor with reverse-mode autograd. Copies share
/// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Size of dimension i; negative indices count from the back.
  int64_t dim(int i) const;
  int64_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  double item() const;
  Tensor clone() const;
  /// Same values, no history.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  /// Builds the output of a differentiable op. The result records `inputs`
  /// only when grad mode is on and at least one input requires grad.
  static Tensor make_result(Shape shape, std::initializer_list<Tensor> inputs,
                            const char* op);
  static Tensor make_result(Shape shape, const std::vector<Tensor>& inputs,
                            const char* op);
  void set_backward(std::function<void(detail::Node&)> fn);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse-mode accumulation from a scalar root. Leaf gradients
/// accumulate across calls; intermediate gradients are reset each call.
void backward(const Tensor& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace mtnet
