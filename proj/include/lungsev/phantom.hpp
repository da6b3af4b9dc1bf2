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

// Synthetic chest CT phantoms: two ellipsoidal lungs cut into five planar
// lobes, ground-glass and consolidation ellipsoids inside them, and an
// oracle severity report tallied during generation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lungsev/error.hpp"
#include "lungsev/random.hpp"
#include "lungsev/severity.hpp"
#include "lungsev/volgrid.hpp"

namespace lungsev::phantom {

/// Axis-aligned ellipsoid, z-y-x millimetres. Voxel (z,y,x) sits at
/// (z*sz, y*sy, x*sx).
struct Ellipsoid {
  std::array<double, 3> center_mm{};
  std::array<double, 3> radii_mm{1.0, 1.0, 1.0};

  [[nodiscard]] bool contains(double z, double y, double x) const {
    const double dz = (z - center_mm[0]) / radii_mm[0];
    const double dy = (y - center_mm[1]) / radii_mm[1];
    const double dx = (x - center_mm[2]) / radii_mm[2];
    return dz * dz + dy * dy + dx * dx <= 1.0;
  }
};

enum class LesionType { kGgo, kConsolidation };

struct Lesion {
  Ellipsoid shape;
  double intensity_hu = -650.0;
  LesionType type = LesionType::kGgo;
  int lobe = 0;  // 0: any lobe; otherwise clipped to that lobe
};

/// Draws lesions per case from the case seed.
struct RandomLesions {
  int min_count = 0;
  int max_count = 6;
  double min_radius_mm = 3.0;
  double max_radius_mm = 12.0;
  double consolidation_prob = 0.3;
  std::array<double, 2> ggo_hu{-700.0, -300.0};
  std::array<double, 2> consolidation_hu{-150.0, 40.0};
};

struct LobeCuts {
  // Axial cut positions as fractions of each lung's z extent.
  std::array<double, 2> right{0.35, 0.55};  // RU | RM | RL
  double left = 0.5;                        // LU | LL
};

inline constexpr double kNoiseMarginHu = 25.0;
inline constexpr double kHighOpacityHu = severity::kDefaultThresholdHu;

struct PhantomSpec {
  Dims dims{32, 64, 64};
  Spacing spacing{3.0, 1.5, 1.5};
  Ellipsoid right_lung;
  Ellipsoid left_lung;
  LobeCuts cuts;
  std::vector<Lesion> lesions;
  std::optional<RandomLesions> random_lesions;
  double background_hu = -1024.0;
  double lung_parenchyma_hu = -850.0;
  double noise_sigma_hu = 0.0;
  std::uint64_t seed = 0;
};

struct PhantomCase {
  Volume volume;                // int16 HU
  LabelMask lobes;
  LabelMask abnorm_gt;
  severity::SeverityReport oracle;
  std::vector<Lesion> lesions;  // as materialized for this case
};

/// Lungs sized to the field of view: right lung on the low-x side.
inline PhantomSpec default_spec(Dims dims = {32, 64, 64}, Spacing spacing = {3.0, 1.5, 1.5}) {
  PhantomSpec s;
  s.dims = dims;
  s.spacing = spacing;
  const double ez = (dims.z - 1) * spacing.z;
  const double ey = (dims.y - 1) * spacing.y;
  const double ex = (dims.x - 1) * spacing.x;
  s.right_lung = {{ez / 2, ey / 2, ex * 0.28}, {ez * 0.42, ey * 0.38, ex * 0.20}};
  s.left_lung = {{ez / 2, ey / 2, ex * 0.72}, {ez * 0.40, ey * 0.36, ex * 0.18}};
  return s;
}

inline void validate(const PhantomSpec& s) {
  auto fail = [](const std::string& m) { throw InputError("invalid phantom spec: " + m); };
  if (s.dims.z < 8 || s.dims.y < 8 || s.dims.x < 8) fail("dims must be >= 8 per axis, got " + s.dims.str());
  validate_geometry(s.dims, s.spacing);
  for (const auto* e : {&s.right_lung, &s.left_lung}) {
    for (double r : e->radii_mm) {
      if (!(r > 0.0) || !std::isfinite(r)) fail("lung radii must be positive");
    }
  }
  if (!(0.0 < s.cuts.right[0] && s.cuts.right[0] < s.cuts.right[1] && s.cuts.right[1] < 1.0)) {
    fail("right lobe cuts must satisfy 0 < a < b < 1");
  }
  if (!(0.0 < s.cuts.left && s.cuts.left < 1.0)) fail("left lobe cut must lie in (0,1)");
  if (!(s.noise_sigma_hu >= 0.0)) fail("noise_sigma_hu must be >= 0");
  if (!(s.lung_parenchyma_hu < kHighOpacityHu - kNoiseMarginHu)) {
    fail("lung_parenchyma_hu must stay below -200 HU by the noise margin");
  }
  if (!(s.background_hu >= -32768 && s.background_hu <= 32767)) fail("background_hu outside int16");
  auto check_lesion = [&](const Lesion& l) {
    for (double r : l.shape.radii_mm) {
      if (!(r > 0.0)) fail("lesion radii must be positive");
    }
    if (l.lobe < 0 || l.lobe > kNumLobes) fail("lesion lobe must be 0..5");
    if (l.type == LesionType::kConsolidation) {
      if (!(l.intensity_hu >= kHighOpacityHu && l.intensity_hu <= 3000)) {
        fail("consolidation intensity must be >= -200 HU");
      }
    } else if (!(l.intensity_hu > -760.0 && l.intensity_hu < kHighOpacityHu)) {
      fail("ground-glass intensity must lie in (-760, -200) HU");
    }
  };
  for (const auto& l : s.lesions) check_lesion(l);
  if (s.random_lesions) {
    const auto& r = *s.random_lesions;
    if (r.min_count < 0 || r.max_count < r.min_count) fail("random lesion counts");
    if (!(r.min_radius_mm > 0.0 && r.max_radius_mm >= r.min_radius_mm)) fail("random lesion radii");
    if (!(r.consolidation_prob >= 0.0 && r.consolidation_prob <= 1.0)) fail("consolidation_prob");
    check_lesion({{}, r.ggo_hu[0], LesionType::kGgo, 0});
    check_lesion({{}, r.ggo_hu[1], LesionType::kGgo, 0});
    check_lesion({{}, r.consolidation_hu[0], LesionType::kConsolidation, 0});
    check_lesion({{}, r.consolidation_hu[1], LesionType::kConsolidation, 0});
  }
}

namespace detail {

inline std::vector<Lesion> draw_lesions(const PhantomSpec& s, const RandomLesions& r, rng::Engine& e) {
  std::vector<Lesion> out;
  const auto count = r.min_count + static_cast<int>(rng::uniform_index(
                                        e, static_cast<std::uint64_t>(r.max_count - r.min_count + 1)));
  for (int k = 0; k < count; ++k) {
    const Ellipsoid& lung = rng::uniform01(e) < 0.5 ? s.right_lung : s.left_lung;
    Lesion l;
    // Rejection-sample a center inside the lung.
    for (int tries = 0; tries < 1000; ++tries) {
      for (int a = 0; a < 3; ++a) {
        l.shape.center_mm[a] = rng::uniform(e, lung.center_mm[a] - lung.radii_mm[a],
                                            lung.center_mm[a] + lung.radii_mm[a]);
      }
      if (lung.contains(l.shape.center_mm[0], l.shape.center_mm[1], l.shape.center_mm[2])) break;
    }
    for (int a = 0; a < 3; ++a) l.shape.radii_mm[a] = rng::uniform(e, r.min_radius_mm, r.max_radius_mm);
    if (rng::uniform01(e) < r.consolidation_prob) {
      l.type = LesionType::kConsolidation;
      l.intensity_hu = std::round(rng::uniform(e, r.consolidation_hu[0], r.consolidation_hu[1]));
    } else {
      l.type = LesionType::kGgo;
      l.intensity_hu = std::round(rng::uniform(e, r.ggo_hu[0], r.ggo_hu[1]));
    }
    out.push_back(l);
  }
  return out;
}

/// Lobe from the planar cuts; 0 outside both lungs. Right lung wins overlaps.
inline std::uint8_t lobe_at(const PhantomSpec& s, double z, double y, double x) {
  if (s.right_lung.contains(z, y, x)) {
    const double f = (z - (s.right_lung.center_mm[0] - s.right_lung.radii_mm[0])) / (2 * s.right_lung.radii_mm[0]);
    if (f < s.cuts.right[0]) return 1;
    if (f < s.cuts.right[1]) return 2;
    return 3;
  }
  if (s.left_lung.contains(z, y, x)) {
    const double f = (z - (s.left_lung.center_mm[0] - s.left_lung.radii_mm[0])) / (2 * s.left_lung.radii_mm[0]);
    return f < s.cuts.left ? 4 : 5;
  }
  return 0;
}

/// Involvement score written as ceil(4f), independent of severity::lobe_score.
inline int oracle_score(std::int64_t hit, std::int64_t total) {
  if (hit == 0 || total == 0) return 0;
  const double f = static_cast<double>(hit) / static_cast<double>(total);
  return std::min(4, static_cast<int>(std::ceil(4.0 * f)));
}

}  // namespace detail

/// Deterministic in `spec.seed`. Noise is truncated at the margin and never
/// moves a lesion voxel across the -200 HU boundary.
inline PhantomCase generate(const PhantomSpec& spec) {
  validate(spec);
  auto e = rng::make_engine(spec.seed);
  PhantomCase c;
  c.lesions = spec.lesions;
  if (spec.random_lesions) {
    auto drawn = detail::draw_lesions(spec, *spec.random_lesions, e);
    c.lesions.insert(c.lesions.end(), drawn.begin(), drawn.end());
  }

  const Dims& d = spec.dims;
  const Spacing& sp = spec.spacing;
  std::vector<float> hu(static_cast<std::size_t>(d.count()));
  c.lobes = LabelMask(d, sp);
  c.abnorm_gt = LabelMask(d, sp);

  std::array<std::int64_t, kNumLobes + 1> lung{}, abn{}, high{};
  std::size_t i = 0;
  for (std::int64_t z = 0; z < d.z; ++z) {
    const double pz = z * sp.z;
    for (std::int64_t y = 0; y < d.y; ++y) {
      const double py = y * sp.y;
      for (std::int64_t x = 0; x < d.x; ++x, ++i) {
        const double px = x * sp.x;
        const std::uint8_t lobe = detail::lobe_at(spec, pz, py, px);
        double base = spec.background_hu;
        bool abnormal = false;
        bool consolidated = false;
        if (lobe != 0) {
          base = spec.lung_parenchyma_hu;
          double best = -1e9;
          for (const auto& l : c.lesions) {
            if (l.lobe != 0 && l.lobe != lobe) continue;
            if (!l.shape.contains(pz, py, px)) continue;
            abnormal = true;
            best = std::max(best, l.intensity_hu);
          }
          if (abnormal) {
            base = best;
            consolidated = best >= kHighOpacityHu;
          }
        }
        double v = base;
        if (spec.noise_sigma_hu > 0.0) {
          const double n = std::clamp(spec.noise_sigma_hu * rng::normal(e), -kNoiseMarginHu, kNoiseMarginHu);
          v = base + n;
        }
        v = std::round(v);
        if (abnormal) {
          v = consolidated ? std::max(v, kHighOpacityHu) : std::min(v, kHighOpacityHu - 1.0);
        }
        hu[i] = static_cast<float>(std::clamp(v, -32768.0, 32767.0));
        c.lobes.data()[i] = lobe;
        c.abnorm_gt.data()[i] = abnormal ? 1 : 0;
        ++lung[lobe];
        if (abnormal) {
          ++abn[lobe];
          if (consolidated) ++high[lobe];
        }
      }
    }
  }
  c.volume = Volume(d, sp, std::move(hu), DType::kInt16);

  auto& o = c.oracle;
  o.threshold_hu = kHighOpacityHu;
  const double voxel = sp.voxel_volume();
  std::int64_t lung_n = 0, abn_n = 0, high_n = 0;
  for (int l = 1; l <= kNumLobes; ++l) {
    auto& rec = o.per_lobe[static_cast<std::size_t>(l - 1)];
    rec.lobe_label = l;
    rec.lobe_volume_mm3 = static_cast<double>(lung[l]) * voxel;
    if (lung[l] > 0) {
      rec.affected_fraction = static_cast<double>(abn[l]) / static_cast<double>(lung[l]);
      rec.high_opacity_fraction = static_cast<double>(high[l]) / static_cast<double>(lung[l]);
    }
    rec.lobe_score = detail::oracle_score(abn[l], lung[l]);
    rec.lobe_ho_score = detail::oracle_score(high[l], lung[l]);
    o.lss += rec.lobe_score;
    o.lhos += rec.lobe_ho_score;
    lung_n += lung[l];
    abn_n += abn[l];
    high_n += high[l];
  }
  if (lung_n == 0) throw InputError("invalid phantom spec: lungs cover no voxel centers");
  o.lung_volume_mm3 = static_cast<double>(lung_n) * voxel;
  o.abnormal_volume_mm3 = static_cast<double>(abn_n) * voxel;
  o.high_opacity_volume_mm3 = static_cast<double>(high_n) * voxel;
  o.po = 100.0 * static_cast<double>(abn_n) / static_cast<double>(lung_n);
  o.pho = 100.0 * static_cast<double>(high_n) / static_cast<double>(lung_n);
  return c;
}

/// Randomized spec for property tests and cohorts: jittered lungs and cuts,
/// 0..6 random lesions, mild noise.
inline PhantomSpec random_spec(std::uint64_t seed, Dims dims = {24, 48, 48}, Spacing spacing = {3.0, 1.5, 1.5}) {
  PhantomSpec s = default_spec(dims, spacing);
  auto e = rng::make_engine(seed ^ 0x5eedULL);
  for (auto* lung : {&s.right_lung, &s.left_lung}) {
    for (int a = 0; a < 3; ++a) {
      lung->center_mm[a] += rng::uniform(e, -0.05, 0.05) * lung->radii_mm[a];
      lung->radii_mm[a] *= rng::uniform(e, 0.85, 1.1);
    }
  }
  s.cuts.right = {rng::uniform(e, 0.2, 0.45), rng::uniform(e, 0.5, 0.75)};
  s.cuts.left = rng::uniform(e, 0.3, 0.7);
  RandomLesions r;
  r.min_radius_mm = 2.0;
  r.max_radius_mm = 0.5 * std::min({s.right_lung.radii_mm[0], s.right_lung.radii_mm[1], s.right_lung.radii_mm[2]});
  s.random_lesions = r;
  s.noise_sigma_hu = 10.0;
  s.seed = seed;
  return s;
}

// Imperfect segmenter -----------------------------------------------------------

struct Perturbation {
  int dilate_vox = 0;
  int erode_vox = 0;
  double speckle_prob = 0.0;  // per lung voxel, toggles the label
};

namespace detail {

/// One 6-connected erosion (grow = false) or dilation (grow = true) step.
/// Outside the grid counts as background.
inline LabelMask morph_step(const LabelMask& m, bool grow) {
  LabelMask out(m.dims(), m.spacing());
  const auto& d = m.dims();
  constexpr std::array<std::array<int, 3>, 6> kNbr{{{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const bool self = m(z, y, x) != 0;
        bool v = self;
        if (grow && !self) {
          for (const auto& n : kNbr) {
            if (m.contains(z + n[0], y + n[1], x + n[2]) && m(z + n[0], y + n[1], x + n[2]) != 0) {
              v = true;
              break;
            }
          }
        } else if (!grow && self) {
          for (const auto& n : kNbr) {
            if (!m.contains(z + n[0], y + n[1], x + n[2]) || m(z + n[0], y + n[1], x + n[2]) == 0) {
              v = false;
              break;
            }
          }
        }
        out(z, y, x) = v ? 1 : 0;
      }
  return out;
}

}  // namespace detail

inline LabelMask dilate(const LabelMask& m, int steps) {
  LabelMask r = m;
  for (int i = 0; i < steps; ++i) r = detail::morph_step(r, true);
  return r;
}

inline LabelMask erode(const LabelMask& m, int steps) {
  LabelMask r = m;
  for (int i = 0; i < steps; ++i) r = detail::morph_step(r, false);
  return r;
}

/// Erodes, then dilates, then toggles random lung voxels with
/// `speckle_prob`, all applied to the ground-truth abnormality mask.
inline LabelMask make_noisy_prediction(const PhantomCase& c, const Perturbation& p, std::uint64_t seed) {
  if (p.dilate_vox < 0 || p.erode_vox < 0) throw InputError("dilate/erode must be >= 0");
  if (!(p.speckle_prob >= 0.0 && p.speckle_prob <= 1.0)) throw InputError("speckle_prob must be in [0,1]");
  LabelMask m = dilate(erode(c.abnorm_gt, p.erode_vox), p.dilate_vox);
  if (p.speckle_prob > 0.0) {
    auto e = rng::make_engine(seed);
    const auto lobes = c.lobes.data();
    auto out = m.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (lobes[i] != 0 && rng::uniform01(e) < p.speckle_prob) out[i] = out[i] != 0 ? 0 : 1;
    }
  }
  return m;
}

// JSON ------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Ellipsoid& e) {
  j = nlohmann::json{{"center_mm", e.center_mm}, {"radii_mm", e.radii_mm}};
}
inline void from_json(const nlohmann::json& j, Ellipsoid& e) {
  j.at("center_mm").get_to(e.center_mm);
  j.at("radii_mm").get_to(e.radii_mm);
}

inline std::string to_string(LesionType t) { return t == LesionType::kGgo ? "ggo" : "consolidation"; }

inline void to_json(nlohmann::json& j, const Lesion& l) {
  j = nlohmann::json{{"center_mm", l.shape.center_mm},
                     {"radii_mm", l.shape.radii_mm},
                     {"intensity_hu", l.intensity_hu},
                     {"type", to_string(l.type)},
                     {"lobe", l.lobe}};
}
inline void from_json(const nlohmann::json& j, Lesion& l) {
  j.at("center_mm").get_to(l.shape.center_mm);
  j.at("radii_mm").get_to(l.shape.radii_mm);
  j.at("intensity_hu").get_to(l.intensity_hu);
  const auto t = j.at("type").get<std::string>();
  if (t == "ggo") {
    l.type = LesionType::kGgo;
  } else if (t == "consolidation") {
    l.type = LesionType::kConsolidation;
  } else {
    throw InputError("lesion type must be ggo or consolidation, got '" + t + "'");
  }
  l.lobe = j.value("lobe", 0);
}

inline void to_json(nlohmann::json& j, const RandomLesions& r) {
  j = nlohmann::json{{"min_count", r.min_count},       {"max_count", r.max_count},
                     {"min_radius_mm", r.min_radius_mm}, {"max_radius_mm", r.max_radius_mm},
                     {"consolidation_prob", r.consolidation_prob}, {"ggo_hu", r.ggo_hu},
                     {"consolidation_hu", r.consolidation_hu}};
}
inline void from_json(const nlohmann::json& j, RandomLesions& r) {
  const RandomLesions d;
  r.min_count = j.value("min_count", d.min_count);
  r.max_count = j.value("max_count", d.max_count);
  r.min_radius_mm = j.value("min_radius_mm", d.min_radius_mm);
  r.max_radius_mm = j.value("max_radius_mm", d.max_radius_mm);
  r.consolidation_prob = j.value("consolidation_prob", d.consolidation_prob);
  r.ggo_hu = j.value("ggo_hu", d.ggo_hu);
  r.consolidation_hu = j.value("consolidation_hu", d.consolidation_hu);
}

inline void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{{"dims", {s.dims.z, s.dims.y, s.dims.x}},
                     {"spacing_mm", {s.spacing.z, s.spacing.y, s.spacing.x}},
                     {"right_lung", s.right_lung},
                     {"left_lung", s.left_lung},
                     {"lobe_cuts", {{"right", s.cuts.right}, {"left", s.cuts.left}}},
                     {"lesions", s.lesions},
                     {"background_hu", s.background_hu},
                     {"lung_parenchyma_hu", s.lung_parenchyma_hu},
                     {"noise_sigma_hu", s.noise_sigma_hu},
                     {"seed", s.seed}};
  if (s.random_lesions) j["random_lesions"] = *s.random_lesions;
}

/// Missing lung fields default to default_spec() for the given dims.
inline void from_json(const nlohmann::json& j, PhantomSpec& s) {
  Dims dims{32, 64, 64};
  Spacing sp{3.0, 1.5, 1.5};
  if (j.contains("dims")) {
    const auto v = j.at("dims").get<std::array<std::int64_t, 3>>();
    dims = {v[0], v[1], v[2]};
  }
  if (j.contains("spacing_mm")) {
    const auto v = j.at("spacing_mm").get<std::array<double, 3>>();
    sp = {v[0], v[1], v[2]};
  }
  s = default_spec(dims, sp);
  if (j.contains("right_lung")) j.at("right_lung").get_to(s.right_lung);
  if (j.contains("left_lung")) j.at("left_lung").get_to(s.left_lung);
  if (j.contains("lobe_cuts")) {
    const auto& c = j.at("lobe_cuts");
    if (c.contains("right")) c.at("right").get_to(s.cuts.right);
    if (c.contains("left")) c.at("left").get_to(s.cuts.left);
  }
  if (j.contains("lesions")) j.at("lesions").get_to(s.lesions);
  if (j.contains("random_lesions")) s.random_lesions = j.at("random_lesions").get<RandomLesions>();
  s.background_hu = j.value("background_hu", s.background_hu);
  s.lung_parenchyma_hu = j.value("lung_parenchyma_hu", s.lung_parenchyma_hu);
  s.noise_sigma_hu = j.value("noise_sigma_hu", s.noise_sigma_hu);
  s.seed = j.value("seed", s.seed);
}

}  // namespace lungsev::phantom
