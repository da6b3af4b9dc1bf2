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

#include "lungsev/error.hpp"
#include "lungsev/toynet/tensor.hpp"

namespace lungsev::toynet {

inline constexpr double kJaccardSmoothing = 1.0;

struct LossResult {
  double loss = 0.0;
  Tensor5 grad;  // dL/dp, zero outside the lung mask
};

/// Smoothed soft-Jaccard loss restricted to lung voxels:
///   L = 1 - (<p,y> + eps) / (<p,p> + <y,y> - <p,y> + eps)
/// with every inner product taken over voxels where `lung` is nonzero.
inline LossResult jaccard_loss(const Tensor5& p, const Tensor5& y, const Tensor5& lung,
                               double eps = kJaccardSmoothing) {
  if (!(p.shape() == y.shape()) || !(p.shape() == lung.shape())) {
    throw InputError("jaccard_loss: shapes " + p.shape().str() + ", " + y.shape().str() + ", " +
                     lung.shape().str() + " differ");
  }
  double py = 0.0, pp = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (lung[i] == 0.0) continue;
    py += p[i] * y[i];
    pp += p[i] * p[i];
    yy += y[i] * y[i];
  }
  const double num = py + eps;
  const double den = pp + yy - py + eps;
  LossResult r{1.0 - num / den, Tensor5(p.shape())};
  const double den2 = den * den;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (lung[i] == 0.0) continue;
    r.grad[i] = -(y[i] * den - num * (2.0 * p[i] - y[i])) / den2;
  }
  return r;
}

}  // namespace lungsev::toynet
