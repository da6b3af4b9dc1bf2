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

// Single-threaded training loop: batch 1, epoch-shuffled order, per-sample
// augmentation, validation after every step, best-validation selection.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lungsev/error.hpp"
#include "lungsev/random.hpp"
#include "lungsev/toynet/loss.hpp"
#include "lungsev/toynet/net.hpp"
#include "lungsev/toynet/ops.hpp"
#include "lungsev/toynet/optimizer.hpp"
#include "lungsev/toynet/tensor.hpp"
#include "lungsev/volgrid.hpp"

namespace lungsev::toynet {

/// HU crop with binary target and lung masks on the same grid.
struct Sample {
  Volume hu;
  LabelMask target;
  LabelMask lung;
};

/// Crops a box around the lung center. `lobes` may hold labels 0..5; any
/// nonzero label counts as lung. `abnorm` is binary.
inline Sample make_sample(const Volume& hu, const LabelMask& lobes, const LabelMask& abnorm, const Dims& box) {
  if (!hu.same_geometry(lobes) || !hu.same_geometry(abnorm)) {
    throw GeometryError("make_sample: volume " + hu.dims().str() + " and masks " + lobes.dims().str() + ", " +
                        abnorm.dims().str() + " differ");
  }
  const Index3 c = lung_center(lobes);
  LabelMask lung = crop_box<std::uint8_t>(lobes, c, box, 0);
  for (auto& v : lung.data()) v = v != 0 ? 1 : 0;
  LabelMask target = crop_box<std::uint8_t>(abnorm, c, box, 0);
  for (auto& v : target.data()) v = v != 0 ? 1 : 0;
  return {crop_box(hu, c, box), std::move(target), std::move(lung)};
}

template <class T>
Tensor5 to_tensor(const Grid<T>& g) {
  const auto& d = g.dims();
  Tensor5 t(Shape5{1, 1, d.z, d.y, d.x});
  const auto src = g.data();
  for (std::size_t i = 0; i < src.size(); ++i) t[i] = static_cast<double>(src[i]);
  return t;
}

struct PreparedSample {
  Tensor5 input;
  Tensor5 target;
  Tensor5 lung;
};

inline PreparedSample prepare(const Sample& s, const WindowSpec& window, const AugmentParams* aug) {
  if (aug != nullptr) {
    return {to_tensor(clip_normalize(apply_augment(s.hu, *aug), window)), to_tensor(apply_flip(s.target, *aug)),
            to_tensor(apply_flip(s.lung, *aug))};
  }
  return {to_tensor(clip_normalize(s.hu, window)), to_tensor(s.target), to_tensor(s.lung)};
}

/// Loss on the positive (abnormal) channel; accumulates parameter gradients
/// into the net when `backward` is set.
inline double loss_step(ToyNet& net, const PreparedSample& p, bool backward) {
  const Tensor5 probs = net.forward(p.input);
  const Tensor5 pos = channel(probs, 1);
  LossResult l = jaccard_loss(pos, p.target, p.lung);
  if (backward) {
    Tensor5 dprobs(probs.shape());
    const std::size_t off = static_cast<std::size_t>(probs.shape().spatial());
    for (std::size_t i = 0; i < l.grad.size(); ++i) dprobs[off + i] = l.grad[i];
    net.backward(dprobs);
  }
  return l.loss;
}

struct TrainConfig {
  int iterations = 200;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  bool augment = true;
  AdaBoundConfig optimizer{};
  WindowSpec window{};

  void validate() const {
    if (iterations < 1) throw InputError("iterations must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InputError("val_fraction must lie in (0,1)");
    optimizer.validate();
  }
};

struct LossRecord {
  int iteration;
  double train_loss;
  double val_loss;
  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainResult {
  std::vector<LossRecord> history;
  int best_iteration = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  ParamSet best_params;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  /// Mean loss over the training split without augmentation.
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  std::int64_t skipped_steps = 0;
};

inline constexpr std::size_t kMinTrainingCases = 10;

/// Disjoint train / validation index sets; validation size floor(f * n).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                                   std::uint64_t seed) {
  if (n == 0) throw InputError("training dataset is empty");
  const auto n_val = static_cast<std::size_t>(fraction * static_cast<double>(n));
  if (n < kMinTrainingCases || n_val < 1 || n_val >= n) {
    throw InputError("dataset of " + std::to_string(n) + " cases is too small for a " +
                     std::to_string(fraction) + " validation split (need >= " + std::to_string(kMinTrainingCases) +
                     ")");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto e = rng::make_engine(seed ^ 0x5eed5a17ULL);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng::uniform_index(e, i + 1)]);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

inline double mean_loss(ToyNet& net, const std::vector<PreparedSample>& set) {
  double s = 0.0;
  for (const auto& p : set) s += loss_step(net, p, false);
  return s / static_cast<double>(set.size());
}

/// Trains `net` in place; on return the net holds the final parameters and
/// `best_params` the parameters with minimal validation loss.
inline TrainResult train(ToyNet& net, const TrainConfig& cfg, const std::vector<Sample>& data) {
  cfg.validate();
  TrainResult r;
  std::tie(r.train_indices, r.val_indices) = split_indices(data.size(), cfg.val_fraction, cfg.seed);

  std::vector<PreparedSample> train_plain;
  std::vector<PreparedSample> val_set;
  for (auto i : r.train_indices) train_plain.push_back(prepare(data[i], cfg.window, nullptr));
  for (auto i : r.val_indices) val_set.push_back(prepare(data[i], cfg.window, nullptr));
  for (const auto& p : train_plain) net.check_input(p.input);

  r.initial_train_loss = mean_loss(net, train_plain);
  r.best_params = net.params();

  AdaBound opt(cfg.optimizer);
  auto order_rng = rng::make_engine(cfg.seed ^ 0x0de5ULL);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    if (cursor == order.size()) {
      order.resize(r.train_indices.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng::uniform_index(order_rng, i + 1)]);
      cursor = 0;
    }
    const std::size_t k = order[cursor++];
    net.params().zero_grad();
    double train_loss = 0.0;
    if (cfg.augment) {
      const AugmentParams aug = draw_augment(rng::mix_seed(cfg.seed) ^ rng::mix_seed(static_cast<std::uint64_t>(it)));
      train_loss = loss_step(net, prepare(data[r.train_indices[k]], cfg.window, &aug), true);
    } else {
      train_loss = loss_step(net, train_plain[k], true);
    }
    opt.step(net.params());
    const double val_loss = mean_loss(net, val_set);
    r.history.push_back({it, train_loss, val_loss});
    if (val_loss < r.best_val_loss) {
      r.best_val_loss = val_loss;
      r.best_iteration = it;
      r.best_params = net.params();
    }
  }
  r.final_train_loss = mean_loss(net, train_plain);
  r.skipped_steps = opt.skipped_steps();
  return r;
}

}  // namespace lungsev::toynet
