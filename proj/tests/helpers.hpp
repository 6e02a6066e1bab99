// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace mtnet::testing {

inline Tensor randn(Shape shape, std::mt19937_64& rng, double scale = 1.0, bool grad = false) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = d(rng);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(grad);
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double norm = 0.0;
  size_t checked = 0;
};

/// Central differences of the scalar `f()` with respect to every element of
/// `inputs` (at most `max_per_input` elements each, spread evenly), compared
/// with the tape gradient.
inline GradCheck grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                            double eps = 1e-6, size_t max_per_input = 0) {
  for (auto& t : inputs) t.zero_grad();
  backward(f());
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradCheck out;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto v = t.data();
    const size_t n = v.size();
    const size_t stride = max_per_input && n > max_per_input ? n / max_per_input : 1;
    for (size_t i = 0; i < n; i += stride) {
      const double orig = v[i];
      double fp, fm;
      {
        NoGradGuard ng;
        v[i] = orig + eps;
        fp = f().item();
        v[i] = orig - eps;
        fm = f().item();
        v[i] = orig;
      }
      const double num = (fp - fm) / (2 * eps);
      diff2 += (num - analytic[i]) * (num - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += num * num;
      ++out.checked;
    }
  }
  out.norm = std::sqrt(std::max(a2, n2));
  out.rel_error = out.norm > 0 ? std::sqrt(diff2) / out.norm : std::sqrt(diff2);
  return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mtnet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace mtnet::testing
