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

// Anisotropic DenseNet encoder / transposed-conv decoder with skip
// concatenations, softmax over two classes.
//
//   stem: conv 1x3x3 -> norm -> LeakyReLU
//   encoder stage i: strided conv (kernel == stride_i) -> dense block
//   decoder stage i (reverse): transposed conv (kernel == stride_i)
//       -> concat with encoder features at that resolution -> conv -> norm -> LeakyReLU
//   head: 1x1x1 conv to 2 channels -> softmax
//
// Stages whose stride keeps z (1,2,2) use 1x3x3 kernels; isotropic stages 3x3x3.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lungsev/error.hpp"
#include "lungsev/random.hpp"
#include "lungsev/toynet/ops.hpp"
#include "lungsev/toynet/tensor.hpp"

namespace lungsev::toynet {

struct NetConfig {
  int in_channels = 1;
  int out_channels = 2;
  Triple stem_kernel{1, 3, 3};
  int stem_channels = 8;
  int num_dense_blocks = 5;
  int layers_per_block = 2;
  int growth_rate = 4;
  std::vector<Triple> strides{{1, 2, 2}, {1, 2, 2}, {2, 2, 2}, {2, 2, 2}, {2, 2, 2}};
  int decoder_channels = 8;
  double leaky_slope = kLeakySlope;
  bool norm_enabled = true;
  double norm_eps = kNormEps;
  std::uint64_t seed = 0;

  [[nodiscard]] Triple cumulative_stride() const {
    Triple c{1, 1, 1};
    for (const auto& s : strides)
      for (int a = 0; a < 3; ++a) c[a] *= s[a];
    return c;
  }

  /// Kernel used by blocks at resolution level `level` (0 = input resolution).
  [[nodiscard]] Triple level_kernel(int level) const {
    if (level == 0) return stem_kernel;
    return strides[static_cast<std::size_t>(level - 1)][0] == 1 ? Triple{1, 3, 3} : Triple{3, 3, 3};
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw InputError("invalid NetConfig: " + m); };
    if (in_channels < 1 || out_channels < 2) fail("need in_channels >= 1 and out_channels >= 2");
    if (stem_channels < 1 || layers_per_block < 1 || growth_rate < 1 || decoder_channels < 1) {
      fail("channel counts must be positive");
    }
    if (num_dense_blocks < 1 || static_cast<int>(strides.size()) != num_dense_blocks) {
      fail("strides must list one entry per dense block");
    }
    bool seen_isotropic = false;
    for (const auto& s : strides) {
      const bool aniso = s == Triple{1, 2, 2};
      const bool iso = s == Triple{2, 2, 2};
      if (!aniso && !iso) fail("strides must be (1,2,2) or (2,2,2)");
      if (aniso && seen_isotropic) fail("anisotropic strides must precede isotropic ones");
      seen_isotropic = seen_isotropic || iso;
    }
    if (stem_kernel[0] % 2 == 0 || stem_kernel[1] % 2 == 0 || stem_kernel[2] % 2 == 0) fail("stem kernel must be odd");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope must be in [0,1)");
  }
};

struct Param {
  std::string name;
  Tensor5 value;
  Tensor5 grad;
};

/// Ordered parameter list; order is the checkpoint and optimizer order.
class ParamSet {
 public:
  std::size_t add(std::string name, Shape5 shape) {
    params_.push_back({std::move(name), Tensor5(shape), Tensor5(shape)});
    return params_.size() - 1;
  }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  [[nodiscard]] std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }
  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }
  [[nodiscard]] const Param* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

 private:
  std::vector<Param> params_;
};

// Layers ------------------------------------------------------------------------

class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(ParamSet& ps, const std::string& name, int cin, int cout, ConvGeometry g, bool transpose = false)
      : geometry_(g), transpose_(transpose), cin_(cin), cout_(cout) {
    const Shape5 ws = transpose ? Shape5{cin, cout, g.kernel[0], g.kernel[1], g.kernel[2]}
                                : Shape5{cout, cin, g.kernel[0], g.kernel[1], g.kernel[2]};
    w_ = ps.add(name + ".weight", ws);
    b_ = ps.add(name + ".bias", Shape5{1, cout, 1, 1, 1});
  }

  Tensor5 forward(const ParamSet& ps, const Tensor5& x) {
    input_ = x;
    return transpose_ ? transpose_conv3d_forward(x, ps[w_].value, &ps[b_].value, geometry_)
                      : conv3d_forward(x, ps[w_].value, &ps[b_].value, geometry_);
  }

  Tensor5 backward(ParamSet& ps, const Tensor5& dy) {
    auto g = transpose_ ? transpose_conv3d_backward(input_, ps[w_].value, dy, geometry_)
                        : conv3d_backward(input_, ps[w_].value, dy, geometry_);
    ps[w_].grad += g.dw;
    ps[b_].grad += g.db;
    return std::move(g.dx);
  }

  [[nodiscard]] std::size_t weight_index() const { return w_; }
  [[nodiscard]] std::size_t bias_index() const { return b_; }
  [[nodiscard]] int fan_in() const {
    const int taps = geometry_.kernel[0] * geometry_.kernel[1] * geometry_.kernel[2];
    if (!transpose_) return cin_ * taps;
    const int stride_vol = geometry_.stride[0] * geometry_.stride[1] * geometry_.stride[2];
    return cin_ * std::max(1, taps / stride_vol);
  }
  [[nodiscard]] const ConvGeometry& geometry() const { return geometry_; }
  [[nodiscard]] bool transposed() const { return transpose_; }

 private:
  ConvGeometry geometry_{};
  bool transpose_ = false;
  int cin_ = 0;
  int cout_ = 0;
  std::size_t w_ = 0;
  std::size_t b_ = 0;
  Tensor5 input_;
};

/// Channel normalization (identity when disabled) followed by LeakyReLU.
class NormAct {
 public:
  NormAct() = default;
  NormAct(ParamSet& ps, const std::string& name, int channels, const NetConfig& cfg)
      : enabled_(cfg.norm_enabled), slope_(cfg.leaky_slope), eps_(cfg.norm_eps) {
    gamma_ = ps.add(name + ".gamma", Shape5{1, channels, 1, 1, 1});
    beta_ = ps.add(name + ".beta", Shape5{1, channels, 1, 1, 1});
    ps[gamma_].value.fill(1.0);
  }

  Tensor5 forward(const ParamSet& ps, const Tensor5& x) {
    pre_act_ = enabled_ ? channel_norm_forward(x, ps[gamma_].value, ps[beta_].value, cache_, eps_) : x;
    return leaky_relu_forward(pre_act_, slope_);
  }

  Tensor5 backward(ParamSet& ps, const Tensor5& dy) {
    Tensor5 d = leaky_relu_backward(pre_act_, dy, slope_);
    if (!enabled_) return d;
    auto g = channel_norm_backward(d, ps[gamma_].value, cache_);
    ps[gamma_].grad += g.dgamma;
    ps[beta_].grad += g.dbeta;
    return std::move(g.dx);
  }

 private:
  bool enabled_ = true;
  double slope_ = kLeakySlope;
  double eps_ = kNormEps;
  std::size_t gamma_ = 0;
  std::size_t beta_ = 0;
  Tensor5 pre_act_;
  NormCache cache_;
};

/// Densely connected block: each composite layer (norm -> LeakyReLU -> conv)
/// sees the concatenation of the block input and every earlier layer output.
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(ParamSet& ps, const std::string& name, int in_channels, const NetConfig& cfg, Triple kernel)
      : in_channels_(in_channels), growth_(cfg.growth_rate) {
    int c = in_channels;
    for (int l = 0; l < cfg.layers_per_block; ++l) {
      const std::string ln = name + ".layer" + std::to_string(l);
      norms_.emplace_back(ps, ln + ".norm", c, cfg);
      convs_.emplace_back(ps, ln + ".conv", c, cfg.growth_rate, ConvGeometry::same(kernel));
      c += cfg.growth_rate;
    }
  }

  [[nodiscard]] int out_channels() const { return in_channels_ + growth_ * static_cast<int>(convs_.size()); }
  [[nodiscard]] const std::vector<ConvLayer>& convs() const { return convs_; }

  Tensor5 forward(const ParamSet& ps, const Tensor5& x) {
    Tensor5 feats = x;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      Tensor5 out = convs_[l].forward(ps, norms_[l].forward(ps, feats));
      feats = concat_channels(feats, out);
    }
    return feats;
  }

  Tensor5 backward(ParamSet& ps, const Tensor5& dy) {
    Tensor5 d = dy;
    for (std::size_t l = convs_.size(); l-- > 0;) {
      const std::int64_t c_prev = d.shape().c - growth_;
      auto [d_prev, d_out] = split_channels(d, c_prev);
      d_prev += norms_[l].backward(ps, convs_[l].backward(ps, d_out));
      d = std::move(d_prev);
    }
    return d;
  }

 private:
  int in_channels_ = 0;
  int growth_ = 0;
  std::vector<NormAct> norms_;
  std::vector<ConvLayer> convs_;
};

/// conv -> norm -> LeakyReLU
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(ParamSet& ps, const std::string& name, int cin, int cout, Triple kernel, const NetConfig& cfg)
      : conv_(ps, name + ".conv", cin, cout, ConvGeometry::same(kernel)), act_(ps, name + ".norm", cout, cfg) {}

  Tensor5 forward(const ParamSet& ps, const Tensor5& x) { return act_.forward(ps, conv_.forward(ps, x)); }
  Tensor5 backward(ParamSet& ps, const Tensor5& dy) { return conv_.backward(ps, act_.backward(ps, dy)); }
  [[nodiscard]] const ConvLayer& conv() const { return conv_; }

 private:
  ConvLayer conv_;
  NormAct act_;
};

// Network -----------------------------------------------------------------------

class ToyNet {
 public:
  explicit ToyNet(NetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    stem_ = ConvUnit(params_, "stem", cfg_.in_channels, cfg_.stem_channels, cfg_.stem_kernel, cfg_);
    std::vector<int> level_channels{cfg_.stem_channels};
    int c = cfg_.stem_channels;
    for (int i = 0; i < cfg_.num_dense_blocks; ++i) {
      const std::string n = "enc" + std::to_string(i);
      const Triple s = cfg_.strides[static_cast<std::size_t>(i)];
      down_.emplace_back(params_, n + ".down", c, c, ConvGeometry::strided(s));
      blocks_.emplace_back(params_, n + ".block", c, cfg_, cfg_.level_kernel(i + 1));
      c = blocks_.back().out_channels();
      level_channels.push_back(c);
    }
    int prev = c;
    for (int i = cfg_.num_dense_blocks - 1; i >= 0; --i) {
      const std::string n = "dec" + std::to_string(i);
      const Triple s = cfg_.strides[static_cast<std::size_t>(i)];
      up_.emplace_back(params_, n + ".up", prev, cfg_.decoder_channels, ConvGeometry::strided(s), true);
      dec_.emplace_back(params_, n + ".fuse", cfg_.decoder_channels + level_channels[static_cast<std::size_t>(i)],
                        cfg_.decoder_channels, cfg_.level_kernel(i), cfg_);
      prev = cfg_.decoder_channels;
    }
    head_ = ConvLayer(params_, "head", cfg_.decoder_channels, cfg_.out_channels, ConvGeometry::same({1, 1, 1}));
    initialize();
  }

  [[nodiscard]] const NetConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  [[nodiscard]] const ParamSet& params() const { return params_; }

  [[nodiscard]] std::size_t encoder_stages() const { return down_.size(); }
  [[nodiscard]] std::size_t decoder_stages() const { return up_.size(); }
  [[nodiscard]] std::vector<Triple> encoder_strides() const {
    std::vector<Triple> s;
    for (const auto& l : down_) s.push_back(l.geometry().stride);
    return s;
  }
  /// Decoder upsampling strides in execution order (deepest first).
  [[nodiscard]] std::vector<Triple> decoder_strides() const {
    std::vector<Triple> s;
    for (const auto& l : up_) s.push_back(l.geometry().stride);
    return s;
  }

  void zero_head() {
    params_[head_.weight_index()].value.fill(0.0);
    params_[head_.bias_index()].value.fill(0.0);
  }

  void check_input(const Tensor5& x) const {
    const auto& s = x.shape();
    const Triple cum = cfg_.cumulative_stride();
    if (s.c != cfg_.in_channels) throw InputError("net input channels " + std::to_string(s.c) + " != config");
    if (s.z % cum[0] != 0 || s.y % cum[1] != 0 || s.x % cum[2] != 0) {
      throw InputError("net input spatial dims " + s.str() + " not divisible by cumulative stride (" +
                       std::to_string(cum[0]) + "," + std::to_string(cum[1]) + "," + std::to_string(cum[2]) + ")");
    }
  }

  /// Per-voxel class probabilities, shape (N, out_channels, Z, Y, X).
  Tensor5 forward(const Tensor5& x) {
    check_input(x);
    std::vector<Tensor5> enc;
    enc.push_back(stem_.forward(params_, x));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      enc.push_back(blocks_[i].forward(params_, down_[i].forward(params_, enc.back())));
    }
    skip_channels_.clear();
    Tensor5 d = enc.back();
    for (std::size_t k = 0; k < up_.size(); ++k) {
      const std::size_t level = blocks_.size() - 1 - k;
      Tensor5 u = up_[k].forward(params_, d);
      skip_channels_.push_back(u.shape().c);
      d = dec_[k].forward(params_, concat_channels(u, enc[level]));
    }
    probs_ = softmax_channels(head_.forward(params_, d));
    debug_check_finite(probs_, "ToyNet::forward");
    return probs_;
  }

  /// Accumulates parameter gradients for dL/dprobs from the last forward.
  /// Returns dL/dx.
  Tensor5 backward(const Tensor5& dprobs) {
    Tensor5 d = head_.backward(params_, softmax_channels_backward(probs_, dprobs));
    const std::size_t stages = blocks_.size();
    std::vector<Tensor5> d_skip(stages + 1);
    for (std::size_t k = up_.size(); k-- > 0;) {
      const std::size_t level = stages - 1 - k;
      Tensor5 dc = dec_[k].backward(params_, d);
      auto [du, de] = split_channels(dc, skip_channels_[k]);
      d_skip[level] = std::move(de);
      d = up_[k].backward(params_, du);
    }
    // d is now the gradient w.r.t. the deepest encoder output.
    for (std::size_t i = stages; i-- > 0;) {
      Tensor5 db = blocks_[i].backward(params_, d);
      d = down_[i].backward(params_, db);
      d += d_skip[i];
    }
    return stem_.backward(params_, d);
  }

 private:
  void initialize() {
    auto e = rng::make_engine(cfg_.seed);
    auto init = [&](const ConvLayer& l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in()));
      for (auto& v : params_[l.weight_index()].value.data()) v = rng::uniform(e, -bound, bound);
    };
    init(stem_.conv());
    for (std::size_t i = 0; i < down_.size(); ++i) {
      init(down_[i]);
      for (const auto& c : blocks_[i].convs()) init(c);
    }
    for (std::size_t k = 0; k < up_.size(); ++k) {
      init(up_[k]);
      init(dec_[k].conv());
    }
    init(head_);
  }

  NetConfig cfg_;
  ParamSet params_;
  ConvUnit stem_;
  std::vector<ConvLayer> down_;
  std::vector<DenseBlock> blocks_;
  std::vector<ConvLayer> up_;
  std::vector<ConvUnit> dec_;
  ConvLayer head_;
  std::vector<std::int64_t> skip_channels_;
  Tensor5 probs_;
};

}  // namespace lungsev::toynet
