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

// Adaptive-moment optimizer whose per-parameter step size is clipped into a
// band [lower(t), upper(t)] that shrinks toward final_lr.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lungsev/error.hpp"
#include "lungsev/toynet/net.hpp"
#include "lungsev/toynet/tensor.hpp"

namespace lungsev::toynet {

struct AdaBoundConfig {
  double lr = 1e-3;
  double final_lr = 0.1;
  double gamma = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0) || !(final_lr > 0.0) || !(gamma > 0.0) || !(eps > 0.0)) {
      throw InputError("AdaBound: lr, final_lr, gamma and eps must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw InputError("AdaBound: betas must lie in [0,1)");
    }
  }
};

struct StepBounds {
  double lower;
  double upper;
};

class AdaBound {
 public:
  explicit AdaBound(AdaBoundConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  [[nodiscard]] const AdaBoundConfig& config() const { return cfg_; }
  [[nodiscard]] std::int64_t step_count() const { return t_; }
  [[nodiscard]] const std::vector<Tensor5>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Tensor5>& second_moments() const { return v_; }
  [[nodiscard]] std::int64_t skipped_steps() const { return skipped_; }

  /// Band at step t (t >= 1).
  [[nodiscard]] StepBounds bounds(std::int64_t t) const {
    if (t < 1) throw InputError("AdaBound::bounds: step must be >= 1");
    const double gt = cfg_.gamma * static_cast<double>(t);
    return {cfg_.final_lr * (1.0 - 1.0 / (gt + 1.0)), cfg_.final_lr * (1.0 + 1.0 / gt)};
  }

  /// Bias-corrected step size before clipping, for one element at step t.
  [[nodiscard]] double raw_step_size(std::int64_t t, double second_moment) const {
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    return cfg_.lr * std::sqrt(bc2) / bc1 / (std::sqrt(second_moment) + cfg_.eps);
  }

  /// Clipped per-element step size at step t.
  [[nodiscard]] double effective_step_size(std::int64_t t, double second_moment) const {
    const auto b = bounds(t);
    return std::clamp(raw_step_size(t, second_moment), b.lower, b.upper);
  }

  /// Applies one update from the accumulated gradients. A non-finite gradient
  /// leaves parameters, moments and the step count untouched and returns false.
  bool step(ParamSet& ps) {
    if (m_.empty()) {
      for (const auto& p : ps) {
        m_.emplace_back(p.value.shape());
        v_.emplace_back(p.value.shape());
      }
    }
    if (m_.size() != ps.size()) throw InputError("AdaBound: parameter set changed size");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!(ps[i].grad.shape() == m_[i].shape())) throw InputError("AdaBound: shape mismatch for " + ps[i].name);
      if (!ps[i].grad.all_finite()) {
        ++skipped_;
        return false;
      }
    }
    ++t_;
    const auto b = bounds(t_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double step_size = cfg_.lr * std::sqrt(bc2) / bc1;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto w = ps[i].value.data();
      auto g = ps[i].grad.data();
      auto m = m_[i].data();
      auto v = v_[i].data();
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
        const double eta = std::clamp(step_size / (std::sqrt(v[k]) + cfg_.eps), b.lower, b.upper);
        w[k] -= eta * m[k];
      }
    }
    return true;
  }

 private:
  AdaBoundConfig cfg_;
  std::int64_t t_ = 0;
  std::int64_t skipped_ = 0;
  std::vector<Tensor5> m_;
  std::vector<Tensor5> v_;
};

}  // namespace lungsev::toynet
