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

#include "lungsev/phantom.hpp"
#include "lungsev/severity.hpp"

namespace {

using namespace lungsev;
using namespace lungsev::phantom;

TEST(Phantom, DeterministicInSeed) {
  const auto a = generate(random_spec(17));
  const auto b = generate(random_spec(17));
  const auto c = generate(random_spec(18));
  EXPECT_EQ(a.volume.values(), b.volume.values());
  EXPECT_EQ(a.lobes.values(), b.lobes.values());
  EXPECT_EQ(a.abnorm_gt.values(), b.abnorm_gt.values());
  EXPECT_EQ(a.oracle, b.oracle);
  EXPECT_NE(a.volume.values(), c.volume.values());
}

TEST(Phantom, AllFiveLobesPresent) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto pc = generate(random_spec(s));
    std::array<int, 6> seen{};
    for (auto l : pc.lobes.data()) seen[l] = 1;
    for (int l = 1; l <= 5; ++l) EXPECT_TRUE(seen[l]) << "seed " << s << " lobe " << l;
  }
}

TEST(Phantom, VolumeIsIntegralInt16) {
  const auto pc = generate(random_spec(3));
  EXPECT_EQ(pc.volume.dtype(), DType::kInt16);
  for (float f : pc.volume.data()) {
    EXPECT_EQ(std::floor(f), f);
    EXPECT_GE(f, -32768.0F);
    EXPECT_LE(f, 32767.0F);
  }
}

TEST(Phantom, LesionDensityRespectsTheThreshold) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto pc = generate(random_spec(s));
    const auto v = pc.volume.data();
    const auto lobes = pc.lobes.data();
    const auto abn = pc.abnorm_gt.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (lobes[i] != 0 && abn[i] == 0) {
        EXPECT_LT(v[i], kHighOpacityHu);
      }
      if (lobes[i] == 0) {
        EXPECT_EQ(abn[i], 0);
      }
    }
  }
}

TEST(Phantom, NoLesionsMeansZeroOracle) {
  auto s = random_spec(5);
  s.random_lesions->max_count = 0;
  const auto pc = generate(s);
  EXPECT_EQ(pc.oracle.po, 0.0);
  EXPECT_EQ(pc.oracle.pho, 0.0);
  EXPECT_EQ(pc.oracle.lss, 0);
  EXPECT_EQ(pc.oracle.lhos, 0);
  for (auto a : pc.abnorm_gt.data()) EXPECT_EQ(a, 0);
}

TEST(Phantom, ExplicitConsolidationCountsAsHighOpacity) {
  PhantomSpec s = default_spec();
  Lesion l;
  l.shape = {s.right_lung.center_mm, {8, 8, 8}};
  l.type = LesionType::kConsolidation;
  l.intensity_hu = 20;
  s.lesions.push_back(l);
  s.noise_sigma_hu = 20;
  const auto pc = generate(s);
  EXPECT_GT(pc.oracle.po, 0.0);
  EXPECT_EQ(pc.oracle.po, pc.oracle.pho);
  const auto r = severity::compute_report(pc.volume, pc.lobes, pc.abnorm_gt);
  EXPECT_EQ(r.po, pc.oracle.po);
  EXPECT_EQ(r.pho, pc.oracle.pho);
}

TEST(Phantom, LobeRestrictedLesionStaysInLobe) {
  PhantomSpec s = default_spec();
  Lesion l;
  l.shape = {s.left_lung.center_mm, {40, 40, 40}};
  l.intensity_hu = -500;
  l.lobe = 4;
  s.lesions.push_back(l);
  const auto pc = generate(s);
  const auto lobes = pc.lobes.data();
  const auto abn = pc.abnorm_gt.data();
  for (std::size_t i = 0; i < abn.size(); ++i) {
    if (abn[i] != 0) {
      EXPECT_EQ(lobes[i], 4);
    }
  }
  EXPECT_EQ(pc.oracle.per_lobe[3].lobe_score, 4);
}

TEST(Phantom, ValidateRejectsBadSpecs) {
  PhantomSpec s = default_spec();
  s.dims = {4, 64, 64};
  EXPECT_THROW(validate(s), InputError);
  s = default_spec();
  s.cuts.right = {0.6, 0.4};
  EXPECT_THROW(validate(s), InputError);
  s = default_spec();
  s.lung_parenchyma_hu = -210;
  EXPECT_THROW(validate(s), InputError);
  s = default_spec();
  Lesion ggo;
  ggo.intensity_hu = -100;
  s.lesions.push_back(ggo);
  EXPECT_THROW(validate(s), InputError);
  s = default_spec();
  s.right_lung.center_mm = {-1000, -1000, -1000};
  s.left_lung.center_mm = {-1000, -1000, -1000};
  EXPECT_THROW(generate(s), InputError);
}

TEST(Phantom, SpecJsonRoundTrip) {
  const PhantomSpec s = random_spec(9);
  const nlohmann::json j = s;
  const auto back = j.get<PhantomSpec>();
  EXPECT_EQ(generate(back).volume.values(), generate(s).volume.values());
}

TEST(Morph, ErodeDilateBasics) {
  LabelMask m({5, 5, 5}, {});
  m(2, 2, 2) = 1;
  const LabelMask d = dilate(m, 1);
  int n = 0;
  for (auto v : d.data()) n += v;
  EXPECT_EQ(n, 7);
  EXPECT_EQ(erode(d, 1).values(), m.values());
  EXPECT_EQ(dilate(m, 0).values(), m.values());
}

TEST(NoisyPrediction, DeterministicAndPerturbed) {
  const auto pc = generate(random_spec(7));
  const Perturbation p{1, 0, 0.01};
  const auto a = make_noisy_prediction(pc, p, 3);
  EXPECT_EQ(a.values(), make_noisy_prediction(pc, p, 3).values());
  EXPECT_NE(a.values(), pc.abnorm_gt.values());
  EXPECT_EQ(make_noisy_prediction(pc, {}, 3).values(), pc.abnorm_gt.values());
  EXPECT_THROW(make_noisy_prediction(pc, {0, 0, 2.0}, 1), InputError);
}

}  // namespace
