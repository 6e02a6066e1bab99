// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "error.hpp"

namespace mtnet {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  for (auto d : shape) {
    if (d < 0) fail(ErrorCode::Shape, "negative dimension in shape " + shape_str(shape));
  }
  node_->value.assign(static_cast<size_t>(shape_numel(shape)), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(std::make_shared<detail::Node>()) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
    fail(ErrorCode::Shape, "value count " + std::to_string(values.size()) +
                               " does not match shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

const Shape& Tensor::shape() const { return node_->shape; }

int64_t Tensor::dim(int i) const {
  const int r = rank();
  const int idx = i < 0 ? r + i : i;
  if (idx < 0 || idx >= r) {
    fail(ErrorCode::Shape, "dimension index " + std::to_string(i) + " out of range for " +
                               shape_str(shape()));
  }
  return node_->shape[static_cast<size_t>(idx)];
}

int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }

std::span<double> Tensor::data() { return node_->value; }
std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::grad() { return node_->ensure_grad(); }
std::span<const double> Tensor::grad() const { return node_->ensure_grad(); }

bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

void Tensor::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

double Tensor::item() const {
  if (numel() != 1) fail(ErrorCode::Shape, "item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::clone() const {
  Tensor out(node_->shape, node_->value);
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value); }

Tensor Tensor::make_result(Shape shape, std::initializer_list<Tensor> inputs, const char* op) {
  return make_result(std::move(shape), std::vector<Tensor>(inputs), op);
}

Tensor Tensor::make_result(Shape shape, const std::vector<Tensor>& inputs, const char* op) {
  Tensor out(std::move(shape));
  out.node_->op = op;
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (const auto& t : inputs) out.node_->inputs.push_back(t.node_);
  return out;
}

void Tensor::set_backward(std::function<void(detail::Node&)> fn) {
  if (node_->requires_grad && !node_->inputs.empty()) node_->backward_fn = std::move(fn);
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    fail(ErrorCode::Shape, "backward() needs a scalar root");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->backward_fn) {
      auto& g = node->ensure_grad();
      std::fill(g.begin(), g.end(), 0.0);
    }
  }
  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace mtnet
