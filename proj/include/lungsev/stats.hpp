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

// Agreement statistics between ground-truth and predicted severity values:
// Pearson r, Kendall tau-b, 2xK chi-squared contingency, OLS with 95% CIs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lungsev/error.hpp"
#include "lungsev/special_functions.hpp"

namespace lungsev::stats {

struct PairedSeries {
  std::vector<double> gt;
  std::vector<double> pred;

  PairedSeries() = default;
  PairedSeries(std::vector<double> gt_values, std::vector<double> pred_values)
      : gt(std::move(gt_values)), pred(std::move(pred_values)) {
    if (gt.size() != pred.size()) {
      throw InputError("paired series lengths differ: " + std::to_string(gt.size()) + " vs " +
                       std::to_string(pred.size()));
    }
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!std::isfinite(gt[i]) || !std::isfinite(pred[i])) {
        throw InputError("paired series holds a non-finite value at " + std::to_string(i));
      }
    }
  }

  [[nodiscard]] std::size_t n() const { return gt.size(); }
};

struct Correlation {
  double value = 0.0;
  double p_value = 1.0;
};

namespace detail {

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline void require_n(const PairedSeries& s, std::size_t n, const char* what) {
  if (s.n() < n) {
    throw UndefinedStatistic(std::string(what) + " needs n >= " + std::to_string(n) + ", got " +
                             std::to_string(s.n()));
  }
}

inline double clamp_unit(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace detail

/// Pearson r; two-sided p from Student t with n-2 dof.
inline Correlation pearson(const PairedSeries& s) {
  detail::require_n(s, 2, "pearson");
  const double mx = detail::mean(s.gt);
  const double my = detail::mean(s.pred);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < s.n(); ++i) {
    const double dx = s.gt[i] - mx;
    const double dy = s.pred[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedStatistic("pearson r undefined: constant series");
  Correlation c;
  c.value = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(s.n()) - 2.0;
  if (dof <= 0.0) {
    c.p_value = 1.0;
  } else if (std::fabs(c.value) == 1.0) {
    c.p_value = 0.0;
  } else {
    const double t = c.value * std::sqrt(dof / (1.0 - c.value * c.value));
    c.p_value = detail::clamp_unit(2.0 * student_t_sf(std::fabs(t), dof));
  }
  return c;
}

// Kendall ---------------------------------------------------------------------

/// Pair counts behind tau-b.
struct KendallCounts {
  std::int64_t n = 0;
  std::int64_t total_pairs = 0;  // n(n-1)/2
  std::int64_t tied_gt = 0;      // pairs tied in gt (incl. joint)
  std::int64_t tied_pred = 0;    // pairs tied in pred (incl. joint)
  std::int64_t tied_both = 0;
  std::int64_t score = 0;        // concordant - discordant

  // Tie-group sums for the variance of the score.
  double gt_v0 = 0, gt_v1 = 0, gt_v2 = 0;      // sum t(t-1)(2t+5), t(t-1)(t-2), t(t-1)
  double pred_v0 = 0, pred_v1 = 0, pred_v2 = 0;
};

namespace detail {

/// Walks runs of equal values in a sorted sequence.
template <class Eq, class F>
void for_each_run(std::size_t n, Eq equal, F on_run) {
  std::size_t start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || !equal(i - 1, i)) {
      on_run(static_cast<std::int64_t>(i - start));
      start = i;
    }
  }
}

/// Stable bottom-up merge sort returning the number of strict inversions.
inline std::int64_t sort_count_inversions(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> buf(n);
  std::int64_t inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          inversions += static_cast<std::int64_t>(mid - i);
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return inversions;
}

inline void add_tie_group(std::int64_t t, double& v0, double& v1, double& v2) {
  const double d = static_cast<double>(t);
  v0 += d * (d - 1) * (2 * d + 5);
  v1 += d * (d - 1) * (d - 2);
  v2 += d * (d - 1);
}

}  // namespace detail

/// O(n log n) pair counting: sort by (gt, pred), then count inversions of
/// pred with a merge sort.
inline KendallCounts kendall_counts(const PairedSeries& s) {
  const std::size_t n = s.n();
  KendallCounts k;
  k.n = static_cast<std::int64_t>(n);
  k.total_pairs = k.n * (k.n - 1) / 2;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (s.gt[a] != s.gt[b]) return s.gt[a] < s.gt[b];
    return s.pred[a] < s.pred[b];
  });

  detail::for_each_run(
      n, [&](std::size_t a, std::size_t b) { return s.gt[order[a]] == s.gt[order[b]]; },
      [&](std::int64_t t) {
        k.tied_gt += t * (t - 1) / 2;
        detail::add_tie_group(t, k.gt_v0, k.gt_v1, k.gt_v2);
      });
  detail::for_each_run(
      n,
      [&](std::size_t a, std::size_t b) {
        return s.gt[order[a]] == s.gt[order[b]] && s.pred[order[a]] == s.pred[order[b]];
      },
      [&](std::int64_t t) { k.tied_both += t * (t - 1) / 2; });

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = s.pred[order[i]];
  const std::int64_t discordant = detail::sort_count_inversions(ys);

  detail::for_each_run(
      n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; },
      [&](std::int64_t t) {
        k.tied_pred += t * (t - 1) / 2;
        detail::add_tie_group(t, k.pred_v0, k.pred_v1, k.pred_v2);
      });

  k.score = k.total_pairs - k.tied_gt - k.tied_pred + k.tied_both - 2 * discordant;
  return k;
}

/// tau-b from pair counts.
inline double tau_b(const KendallCounts& k) {
  const std::int64_t a = k.total_pairs - k.tied_gt;
  const std::int64_t b = k.total_pairs - k.tied_pred;
  if (a == 0 || b == 0) throw UndefinedStatistic("kendall tau-b undefined: a series is entirely tied");
  return std::clamp(static_cast<double>(k.score) / std::sqrt(static_cast<double>(a) * static_cast<double>(b)),
                    -1.0, 1.0);
}

/// Two-sided p from the normal approximation to the score with tie-adjusted variance.
inline double kendall_p_value(const KendallCounts& k) {
  const double n = static_cast<double>(k.n);
  double var = (n * (n - 1) * (2 * n + 5) - k.gt_v0 - k.pred_v0) / 18.0;
  if (k.n > 2) var += k.gt_v1 * k.pred_v1 / (9.0 * n * (n - 1) * (n - 2));
  var += k.gt_v2 * k.pred_v2 / (2.0 * n * (n - 1));
  if (!(var > 0.0)) return 1.0;
  const double z = static_cast<double>(k.score) / std::sqrt(var);
  return detail::clamp_unit(2.0 * normal_sf(std::fabs(z)));
}

inline Correlation kendall_tau(const PairedSeries& s) {
  detail::require_n(s, 2, "kendall tau");
  const auto k = kendall_counts(s);
  return {tau_b(k), kendall_p_value(k)};
}

// Binning and contingency -----------------------------------------------------

/// Bin i is [edges[i], edges[i+1]); the last bin is closed on the right.
struct BinEdges {
  std::vector<double> edges;

  /// Percent bins 0-1, 1-25, 25-50, 50-75, 75-100.
  static BinEdges clinical_percent() { return {{0.0, 1.0, 25.0, 50.0, 75.0, 100.0}}; }

  /// One bin per integer score 0..max_score.
  static BinEdges integer_scores(int max_score = 20) {
    BinEdges b;
    for (int i = 0; i <= max_score + 1; ++i) b.edges.push_back(i - 0.5);
    return b;
  }

  [[nodiscard]] std::size_t bins() const { return edges.size() - 1; }
};

inline std::vector<std::int64_t> bin_counts(const std::vector<double>& values, const BinEdges& e) {
  if (e.edges.size() < 2 || !std::is_sorted(e.edges.begin(), e.edges.end())) {
    throw InputError("bin edges must be ascending with at least two entries");
  }
  std::vector<std::int64_t> counts(e.bins(), 0);
  const double lo = e.edges.front();
  const double hi = e.edges.back();
  for (double v : values) {
    if (!(v >= lo && v <= hi)) {
      throw InputError("value " + std::to_string(v) + " outside bin range [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
    }
    auto it = std::upper_bound(e.edges.begin(), e.edges.end(), v);
    auto bin = static_cast<std::size_t>(it - e.edges.begin()) - 1;
    if (bin >= counts.size()) bin = counts.size() - 1;  // v == hi
    ++counts[bin];
  }
  return counts;
}

struct ContingencyResult {
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::vector<std::vector<std::int64_t>> table;  // 2 x K as given
  std::vector<std::size_t> kept_columns;         // columns with a nonzero total
};

/// Pearson chi-squared on the 2xK table {gt, pred}; empty columns are
/// dropped before the dof count. No continuity correction.
inline ContingencyResult chi2_contingency(const std::vector<std::int64_t>& gt_counts,
                                          const std::vector<std::int64_t>& pred_counts) {
  if (gt_counts.size() != pred_counts.size() || gt_counts.empty()) {
    throw InputError("contingency rows must have equal, nonzero length");
  }
  ContingencyResult r;
  r.table = {gt_counts, pred_counts};
  double rows[2] = {0.0, 0.0};
  for (std::size_t j = 0; j < gt_counts.size(); ++j) {
    if (gt_counts[j] < 0 || pred_counts[j] < 0) throw InputError("contingency counts must be >= 0");
    rows[0] += static_cast<double>(gt_counts[j]);
    rows[1] += static_cast<double>(pred_counts[j]);
    if (gt_counts[j] + pred_counts[j] > 0) r.kept_columns.push_back(j);
  }
  if (rows[0] == 0.0 || rows[1] == 0.0) throw InputError("contingency row sums to zero");
  const double total = rows[0] + rows[1];
  for (std::size_t j : r.kept_columns) {
    const double col = static_cast<double>(gt_counts[j] + pred_counts[j]);
    for (int i = 0; i < 2; ++i) {
      const double expected = rows[i] * col / total;
      const double observed = static_cast<double>(r.table[i][j]);
      r.chi2 += (observed - expected) * (observed - expected) / expected;
    }
  }
  r.dof = static_cast<int>(r.kept_columns.size()) - 1;
  r.p_value = r.dof > 0 ? detail::clamp_unit(reg_inc_gamma_q(r.dof / 2.0, r.chi2 / 2.0)) : 1.0;
  return r;
}

// Regression ------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct RegressionFit {
  std::size_t n = 0;
  double beta0 = 0.0;  // intercept
  double beta1 = 0.0;  // slope
  Interval beta0_ci;
  Interval beta1_ci;
  double beta0_se = 0.0;
  double beta1_se = 0.0;
  double r2 = 0.0;
  double mean_abs_error = 0.0;  // mean |gt - pred|
  double rmse_about_fit = 0.0;  // sqrt(SSres / n)
  double residual_se = 0.0;     // sqrt(SSres / (n-2))
};

inline constexpr double kConfidenceLevel = 0.95;

/// Ordinary least squares of gt on pred: gt = beta0 + beta1 * pred.
inline RegressionFit linfit(const PairedSeries& s) {
  detail::require_n(s, 3, "linfit");
  const std::size_t n = s.n();
  const double mx = detail::mean(s.pred);
  const double my = detail::mean(s.gt);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = s.pred[i] - mx;
    const double dy = s.gt[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw UndefinedStatistic("linfit undefined: constant predictor");

  RegressionFit f;
  f.n = n;
  f.beta1 = sxy / sxx;
  f.beta0 = my - f.beta1 * mx;
  double ss_res = 0.0, abs_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = s.gt[i] - (f.beta0 + f.beta1 * s.pred[i]);
    ss_res += e * e;
    abs_err += std::fabs(s.gt[i] - s.pred[i]);
  }
  const double nd = static_cast<double>(n);
  f.mean_abs_error = abs_err / nd;
  f.rmse_about_fit = std::sqrt(ss_res / nd);
  f.residual_se = std::sqrt(ss_res / (nd - 2.0));
  f.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;

  f.beta1_se = f.residual_se / std::sqrt(sxx);
  f.beta0_se = f.residual_se * std::sqrt(1.0 / nd + mx * mx / sxx);
  const double t = student_t_isf((1.0 - kConfidenceLevel) / 2.0, nd - 2.0);
  f.beta0_ci = {f.beta0 - t * f.beta0_se, f.beta0 + t * f.beta0_se};
  f.beta1_ci = {f.beta1 - t * f.beta1_se, f.beta1 + t * f.beta1_se};
  return f;
}

}  // namespace lungsev::stats
