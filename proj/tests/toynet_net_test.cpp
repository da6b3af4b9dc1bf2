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

#include <gtest/gtest.h>

#include <algorithm>

#include "lungsev/toynet/loss.hpp"
#include "lungsev/toynet/net.hpp"
#include "lungsev/toynet/train.hpp"
#include "oracles/gradcheck.hpp"

namespace {

using namespace lungsev::toynet;
namespace rng = lungsev::rng;

NetConfig small_config(bool norm, std::uint64_t seed) {
  NetConfig c;
  c.stem_channels = 3;
  c.layers_per_block = 1;
  c.growth_rate = 2;
  c.decoder_channels = 3;
  c.norm_enabled = norm;
  c.seed = seed;
  return c;
}

TEST(NetConfig, DefaultsFollowAnisotropicPattern) {
  const NetConfig c;
  EXPECT_NO_THROW(c.validate());
  const std::vector<Triple> expected{{1, 2, 2}, {1, 2, 2}, {2, 2, 2}, {2, 2, 2}, {2, 2, 2}};
  EXPECT_EQ(c.strides, expected);
  EXPECT_EQ(c.cumulative_stride(), (Triple{8, 32, 32}));
  EXPECT_EQ(c.stem_kernel, (Triple{1, 3, 3}));
  EXPECT_EQ(c.level_kernel(1), (Triple{1, 3, 3}));
  EXPECT_EQ(c.level_kernel(3), (Triple{3, 3, 3}));
}

TEST(NetConfig, RejectsBadStrides) {
  NetConfig c;
  c.strides[0] = {2, 2, 2};
  EXPECT_THROW(c.validate(), lungsev::InputError);
  c = NetConfig{};
  c.strides[1] = {1, 3, 3};
  EXPECT_THROW(c.validate(), lungsev::InputError);
  c = NetConfig{};
  c.num_dense_blocks = 4;
  EXPECT_THROW(c.validate(), lungsev::InputError);
  c = NetConfig{};
  c.growth_rate = 0;
  EXPECT_THROW(ToyNet{c}, lungsev::InputError);
}

TEST(ToyNet, OutputShapeAndSoftmax) {
  NetConfig c;
  c.seed = 3;
  ToyNet net(c);
  auto e = rng::make_engine(4);
  const Tensor5 x = oracle::random_tensor({1, 1, 8, 32, 32}, e, 0.0, 1.0);
  const Tensor5 p = net.forward(x);
  ASSERT_EQ(p.shape(), (Shape5{1, 2, 8, 32, 32}));
  const std::size_t vox = 8 * 32 * 32;
  for (std::size_t i = 0; i < vox; ++i) {
    EXPECT_NEAR(p[i] + p[vox + i], 1.0, 1e-9);
    EXPECT_GE(p[i], 0.0);
    EXPECT_LE(p[i], 1.0);
  }
}

TEST(ToyNet, LargerInputKeepsShape) {
  ToyNet net(small_config(true, 5));
  auto e = rng::make_engine(6);
  const Tensor5 p = net.forward(oracle::random_tensor({2, 1, 16, 32, 64}, e));
  EXPECT_EQ(p.shape(), (Shape5{2, 2, 16, 32, 64}));
}

TEST(ToyNet, ZeroHeadGivesHalf) {
  ToyNet net(NetConfig{});
  net.zero_head();
  auto e = rng::make_engine(7);
  const Tensor5 p = net.forward(oracle::random_tensor({1, 1, 8, 32, 32}, e));
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
}

TEST(ToyNet, IndivisibleInputThrows) {
  ToyNet net(small_config(true, 1));
  EXPECT_THROW(net.forward(Tensor5({1, 1, 4, 16, 16})), lungsev::InputError);
  EXPECT_THROW(net.forward(Tensor5({1, 1, 8, 32, 48})), lungsev::InputError);
  EXPECT_THROW(net.forward(Tensor5({1, 2, 8, 32, 32})), lungsev::InputError);
}

TEST(ToyNet, DecoderMirrorsEncoder) {
  ToyNet net(NetConfig{});
  ASSERT_EQ(net.encoder_stages(), 5u);
  ASSERT_EQ(net.decoder_stages(), net.encoder_stages());
  auto enc = net.encoder_strides();
  auto dec = net.decoder_strides();
  std::reverse(dec.begin(), dec.end());
  EXPECT_EQ(enc, dec);
}

TEST(ToyNet, InitializationIsSeeded) {
  ToyNet a(small_config(true, 9));
  ToyNet b(small_config(true, 9));
  ToyNet c(small_config(true, 10));
  ASSERT_EQ(a.params().size(), b.params().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    for (std::size_t k = 0; k < a.params()[i].value.size(); ++k) {
      EXPECT_EQ(a.params()[i].value[k], b.params()[i].value[k]);
      differs = differs || a.params()[i].value[k] != c.params()[i].value[k];
    }
  }
  EXPECT_TRUE(differs);
  const Param* bias = a.params().find("head.bias");
  ASSERT_NE(bias, nullptr);
  for (double v : bias->value.data()) EXPECT_EQ(v, 0.0);
}

void check_end_to_end(bool norm, double step) {
  ToyNet net(small_config(norm, 21));
  auto e = rng::make_engine(22);
  // Single-voxel levels normalize to exactly beta; move beta off the LeakyReLU kink.
  for (auto& p : net.params()) {
    if (p.name.ends_with(".beta")) {
      for (auto& v : p.value.data()) v = rng::uniform(e, 0.05, 0.2) * (rng::uniform01(e) < 0.5 ? -1.0 : 1.0);
    }
  }
  PreparedSample s{oracle::random_tensor({1, 1, 8, 32, 32}, e, 0.0, 1.0), Tensor5({1, 1, 8, 32, 32}),
                   Tensor5({1, 1, 8, 32, 32})};
  for (std::size_t i = 0; i < s.target.size(); ++i) {
    s.target[i] = rng::uniform01(e) < 0.3 ? 1.0 : 0.0;
    s.lung[i] = rng::uniform01(e) < 0.6 ? 1.0 : 0.0;
  }
  net.params().zero_grad();
  loss_step(net, s, true);
  auto f = [&] { return loss_step(net, s, false); };
  std::vector<double> an, num;
  for (auto& p : net.params()) {
    const auto idx = oracle::sample_indices(p.value.size(), 4, e);
    const auto a = oracle::pick(p.grad.data(), idx);
    const auto n = oracle::numeric_grad(f, p.value.data(), idx, step);
    an.insert(an.end(), a.begin(), a.end());
    num.insert(num.end(), n.begin(), n.end());
  }
  EXPECT_LT(oracle::relative_error(an, num), 1e-4);
}

TEST(ToyNet, EndToEndGradientWithoutNorm) { check_end_to_end(false, oracle::kFdStep); }

// With batch statistics every parameter moves every pre-activation, so a 1e-5
// step crosses LeakyReLU kinks across the whole volume; a finer step is used.
TEST(ToyNet, EndToEndGradientWithNorm) { check_end_to_end(true, 1e-6); }

TEST(ToyNet, InputGradient) {
  ToyNet net(small_config(false, 31));
  auto e = rng::make_engine(32);
  Tensor5 x = oracle::random_tensor({1, 1, 8, 32, 32}, e);
  const Tensor5 p0 = net.forward(x);
  const Tensor5 r = oracle::random_tensor(p0.shape(), e);
  net.params().zero_grad();
  const Tensor5 dx = net.backward(r);
  auto f = [&] { return dot(net.forward(x), r); };
  const auto idx = oracle::sample_indices(x.size(), 40, e);
  EXPECT_LT(oracle::relative_error(oracle::pick(dx.data(), idx), oracle::numeric_grad(f, x.data(), idx)), 1e-4);
}

}  // namespace
