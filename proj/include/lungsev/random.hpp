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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

// Draws built only on the raw mt19937_64 output stream, which the standard
// fixes exactly. std::*_distribution output is implementation-defined, so
// nothing seeded in this library goes through it.

namespace lungsev::rng {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent per-case seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Engine make_engine(std::uint64_t seed) { return Engine(mix_seed(seed)); }

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& e) { return static_cast<double>(e() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& e, double lo, double hi) { return lo + (hi - lo) * uniform01(e); }

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Engine& e, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(e) * static_cast<double>(n));
}

/// Standard normal by Box-Muller (one value per call; the pair is not cached).
inline double normal(Engine& e) {
  double u1 = uniform01(e);
  while (u1 <= 0.0) u1 = uniform01(e);
  const double u2 = uniform01(e);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lungsev::rng
