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

#include <cstdint>
#include <vector>

#include "lungsev/phantom.hpp"
#include "lungsev/toynet/train.hpp"

namespace fixtures {

inline constexpr lungsev::Dims kToyDims{8, 32, 32};

/// Toy-sized phantom crops. `lung_scale` shrinks both lung ellipsoids.
inline std::vector<lungsev::toynet::Sample> training_set(std::size_t n, std::uint64_t seed, bool lesions = true,
                                                         double lung_scale = 1.0) {
  std::vector<lungsev::toynet::Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = lungsev::phantom::random_spec(seed + i, kToyDims);
    s.random_lesions->min_count = lesions ? 2 : 0;
    if (!lesions) s.random_lesions->max_count = 0;
    for (auto* l : {&s.right_lung, &s.left_lung})
      for (auto& r : l->radii_mm) r *= lung_scale;
    const auto c = lungsev::phantom::generate(s);
    out.push_back(lungsev::toynet::make_sample(c.volume, c.lobes, c.abnorm_gt, kToyDims));
  }
  return out;
}

}  // namespace fixtures
