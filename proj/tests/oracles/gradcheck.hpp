/* Copyright 2026 The lungsev Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Central finite differences. Relative error is taken norm-wise:
// |a - n|_2 / max(|a|_2, |n|_2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lungsev/random.hpp"
#include "lungsev/toynet/tensor.hpp"

namespace oracle {

inline constexpr double kFdStep = 1e-5;

inline std::vector<double> numeric_grad(const std::function<double()>& f, std::span<double> v,
                                        const std::vector<std::size_t>& which, double h = kFdStep) {
  std::vector<double> g;
  g.reserve(which.size());
  for (auto i : which) {
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = f();
    v[i] = orig - h;
    const double fm = f();
    v[i] = orig;
    g.push_back((fp - fm) / (2.0 * h));
  }
  return g;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

/// Up to `k` distinct indices in [0, n), sorted.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, lungsev::rng::Engine& e) {
  if (k >= n) return all_indices(n);
  std::vector<std::size_t> idx = all_indices(n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + lungsev::rng::uniform_index(e, n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double den = std::sqrt(std::max(na, nn));
  return den == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / den;
}

inline std::vector<double> pick(std::span<const double> g, const std::vector<std::size_t>& which) {
  std::vector<double> out;
  out.reserve(which.size());
  for (auto i : which) out.push_back(g[i]);
  return out;
}

inline lungsev::toynet::Tensor5 random_tensor(lungsev::toynet::Shape5 s, lungsev::rng::Engine& e, double lo = -1.0,
                                              double hi = 1.0) {
  lungsev::toynet::Tensor5 t(s);
  for (auto& v : t.data()) v = lungsev::rng::uniform(e, lo, hi);
  return t;
}

}  // namespace oracle
