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

// Percentage of opacity (PO), percentage of high opacity (PHO), and the
// lobe-wise lung severity / high-opacity scores (LSS, LHOS).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "lungsev/error.hpp"
#include "lungsev/volgrid.hpp"

namespace lungsev::severity {

inline constexpr double kDefaultThresholdHu = -200.0;

struct LobeRecord {
  int lobe_label = 0;
  double lobe_volume_mm3 = 0.0;
  double affected_fraction = 0.0;
  double high_opacity_fraction = 0.0;
  int lobe_score = 0;
  int lobe_ho_score = 0;

  friend bool operator==(const LobeRecord&, const LobeRecord&) = default;
};

struct SeverityReport {
  double po = 0.0;
  double pho = 0.0;
  int lss = 0;
  int lhos = 0;
  std::array<LobeRecord, kNumLobes> per_lobe{};
  double lung_volume_mm3 = 0.0;
  double abnormal_volume_mm3 = 0.0;
  double high_opacity_volume_mm3 = 0.0;
  double threshold_hu = kDefaultThresholdHu;

  friend bool operator==(const SeverityReport&, const SeverityReport&) = default;
};

/// Involvement score for a lobe fraction: 0 only when untouched, then
/// (0,.25] -> 1, (.25,.5] -> 2, (.5,.75] -> 3, (.75,1] -> 4.
inline int lobe_score(double fraction) {
  if (!std::isfinite(fraction) || fraction < 0.0 || fraction > 1.0) {
    throw InputError("lobe fraction must lie in [0,1], got " + std::to_string(fraction));
  }
  if (fraction == 0.0) return 0;
  if (fraction <= 0.25) return 1;
  if (fraction <= 0.50) return 2;
  if (fraction <= 0.75) return 3;
  return 4;
}

namespace detail {

template <class A, class B>
void require_same_geometry(const Grid<A>& a, const char* a_name, const Grid<B>& b, const char* b_name) {
  if (!a.same_geometry(b)) {
    throw GeometryError(std::string("geometry mismatch: ") + a_name + " dims " + a.dims().str() +
                        " spacing " + a.spacing().str() + " vs " + b_name + " dims " + b.dims().str() +
                        " spacing " + b.spacing().str());
  }
}

struct LobeTally {
  std::array<std::int64_t, kNumLobes + 1> lung{};
  std::array<std::int64_t, kNumLobes + 1> abnormal{};
  std::array<std::int64_t, kNumLobes + 1> high{};
};

inline void reject_normalized(const Volume& v) {
  if (v.normalized()) throw InputError("PHO needs a HU volume; got a normalized one");
  const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
  if (*lo >= 0.0F && *hi <= 1.0F) {
    throw InputError("volume values all lie in [0,1]; looks normalized, PHO needs HU");
  }
}

/// One fixed-order pass. `hu` may be null when only PO is wanted.
inline LobeTally tally(const Volume* hu, const LabelMask& lobes, const LabelMask& abnorm, double threshold) {
  require_same_geometry(lobes, "lobes", abnorm, "abnormality");
  if (hu != nullptr) require_same_geometry(*hu, "volume", lobes, "lobes");
  LobeTally t;
  const auto lab = lobes.data();
  const auto ab = abnorm.data();
  const float* h = hu != nullptr ? hu->data().data() : nullptr;
  for (std::size_t i = 0; i < lab.size(); ++i) {
    const std::uint8_t l = lab[i];
    const std::uint8_t a = ab[i];
    if (l > kNumLobes) throw InputError("lobe label " + std::to_string(l) + " outside 0..5");
    if (a > 1) throw InputError("abnormality label " + std::to_string(a) + " outside {0,1}");
    ++t.lung[l];
    if (a != 0) {
      ++t.abnormal[l];
      if (h != nullptr && static_cast<double>(h[i]) >= threshold) ++t.high[l];
    }
  }
  std::int64_t lung = 0;
  for (std::uint8_t l = 1; l <= kNumLobes; ++l) lung += t.lung[l];
  if (lung == 0) throw InputError("lung mask is empty");
  return t;
}

inline std::int64_t sum_lobes(const std::array<std::int64_t, kNumLobes + 1>& c) {
  std::int64_t s = 0;
  for (std::uint8_t l = 1; l <= kNumLobes; ++l) s += c[l];
  return s;
}

inline double percent(std::int64_t num, std::int64_t den) {
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

/// Abnormal share of lung volume, in percent. Abnormal voxels outside the
/// lung do not count.
inline double compute_po(const LabelMask& lobes, const LabelMask& abnorm) {
  const auto t = detail::tally(nullptr, lobes, abnorm, kDefaultThresholdHu);
  return detail::percent(detail::sum_lobes(t.abnormal), detail::sum_lobes(t.lung));
}

/// Share of lung volume that is abnormal and at or above `threshold` HU.
inline double compute_pho(const Volume& v, const LabelMask& lobes, const LabelMask& abnorm,
                          double threshold = kDefaultThresholdHu) {
  detail::reject_normalized(v);
  const auto t = detail::tally(&v, lobes, abnorm, threshold);
  return detail::percent(detail::sum_lobes(t.high), detail::sum_lobes(t.lung));
}

inline SeverityReport compute_report(const Volume& v, const LabelMask& lobes, const LabelMask& abnorm,
                                     double threshold = kDefaultThresholdHu) {
  detail::reject_normalized(v);
  const auto t = detail::tally(&v, lobes, abnorm, threshold);
  const double voxel = lobes.spacing().voxel_volume();

  SeverityReport r;
  r.threshold_hu = threshold;
  for (std::uint8_t l = 1; l <= kNumLobes; ++l) {
    auto& rec = r.per_lobe[l - 1];
    rec.lobe_label = l;
    rec.lobe_volume_mm3 = static_cast<double>(t.lung[l]) * voxel;
    if (t.lung[l] > 0) {
      rec.affected_fraction = static_cast<double>(t.abnormal[l]) / static_cast<double>(t.lung[l]);
      rec.high_opacity_fraction = static_cast<double>(t.high[l]) / static_cast<double>(t.lung[l]);
    }
    rec.lobe_score = lobe_score(rec.affected_fraction);
    rec.lobe_ho_score = lobe_score(rec.high_opacity_fraction);
    r.lss += rec.lobe_score;
    r.lhos += rec.lobe_ho_score;
  }
  const std::int64_t lung = detail::sum_lobes(t.lung);
  const std::int64_t abn = detail::sum_lobes(t.abnormal);
  const std::int64_t high = detail::sum_lobes(t.high);
  r.lung_volume_mm3 = static_cast<double>(lung) * voxel;
  r.abnormal_volume_mm3 = static_cast<double>(abn) * voxel;
  r.high_opacity_volume_mm3 = static_cast<double>(high) * voxel;
  r.po = detail::percent(abn, lung);
  r.pho = detail::percent(high, lung);
  return r;
}

// JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const LobeRecord& r) {
  j = nlohmann::json{{"lobe_label", r.lobe_label},
                     {"lobe_volume_mm3", r.lobe_volume_mm3},
                     {"affected_fraction", r.affected_fraction},
                     {"high_opacity_fraction", r.high_opacity_fraction},
                     {"lobe_score", r.lobe_score},
                     {"lobe_ho_score", r.lobe_ho_score}};
}

inline void from_json(const nlohmann::json& j, LobeRecord& r) {
  j.at("lobe_label").get_to(r.lobe_label);
  j.at("lobe_volume_mm3").get_to(r.lobe_volume_mm3);
  j.at("affected_fraction").get_to(r.affected_fraction);
  j.at("high_opacity_fraction").get_to(r.high_opacity_fraction);
  j.at("lobe_score").get_to(r.lobe_score);
  j.at("lobe_ho_score").get_to(r.lobe_ho_score);
}

inline void to_json(nlohmann::json& j, const SeverityReport& r) {
  j = nlohmann::json{{"po", r.po},
                     {"pho", r.pho},
                     {"lss", r.lss},
                     {"lhos", r.lhos},
                     {"per_lobe", r.per_lobe},
                     {"lung_volume_mm3", r.lung_volume_mm3},
                     {"abnormal_volume_mm3", r.abnormal_volume_mm3},
                     {"high_opacity_volume_mm3", r.high_opacity_volume_mm3},
                     {"threshold_hu", r.threshold_hu}};
}

inline void from_json(const nlohmann::json& j, SeverityReport& r) {
  j.at("po").get_to(r.po);
  j.at("pho").get_to(r.pho);
  j.at("lss").get_to(r.lss);
  j.at("lhos").get_to(r.lhos);
  const auto& lobes = j.at("per_lobe");
  if (!lobes.is_array() || lobes.size() != kNumLobes) {
    throw FormatError("per_lobe must hold 5 records");
  }
  for (std::size_t i = 0; i < kNumLobes; ++i) lobes[i].get_to(r.per_lobe[i]);
  j.at("lung_volume_mm3").get_to(r.lung_volume_mm3);
  j.at("abnormal_volume_mm3").get_to(r.abnormal_volume_mm3);
  j.at("high_opacity_volume_mm3").get_to(r.high_opacity_volume_mm3);
  j.at("threshold_hu").get_to(r.threshold_hu);
}

}  // namespace lungsev::severity
