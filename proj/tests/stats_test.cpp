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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "lungsev/stats.hpp"
#include "oracles/stats_oracle.hpp"

namespace lungsev::stats {
namespace {

std::vector<double> noisy_line(std::mt19937_64& rng, const std::vector<double>& x, double a, double b, double sigma) {
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> y;
  for (double v : x) y.push_back(a + b * v + noise(rng));
  return y;
}

std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> small_ints(std::mt19937_64& rng, std::size_t n, int hi) {
  std::uniform_int_distribution<int> u(0, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Pearson ---------------------------------------------------------------------

TEST(Pearson, ExactLinear) {
  EXPECT_EQ(pearson({{1, 2, 3}, {2, 4, 6}}).value, 1.0);
  EXPECT_EQ(pearson({{1, 2, 3}, {3, 2, 1}}).value, -1.0);
}

TEST(Pearson, NoisyLineMatchesOracle) {
  std::mt19937_64 rng(20);
  const auto x = uniform_values(rng, 20, 0, 50);
  const auto y = noisy_line(rng, x, 1.0, 0.8, 6.0);
  const auto got = pearson({x, y});
  const auto want = oracle::pearson(x, y);
  EXPECT_NEAR(got.value, want.r, 1e-12);
  EXPECT_NEAR(got.p_value, want.p, 1e-9);
}

TEST(Pearson, ConstantSeriesIsUndefined) {
  EXPECT_THROW(pearson({{1, 1, 1}, {1, 2, 3}}), UndefinedStatistic);
  EXPECT_THROW(pearson({{1}, {1}}), UndefinedStatistic);
}

TEST(Pearson, AffineInvariance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = uniform_values(rng, 15, -5, 5);
    const auto y = noisy_line(rng, x, 0.0, 1.0, 2.0);
    std::vector<double> y2;
    for (double v : y) y2.push_back(3.5 * v - 7.0);
    EXPECT_NEAR(pearson({x, y}).value, pearson({x, y2}).value, 1e-12);
  }
}

TEST(Pearson, PValueFallsWithStrongerAssociation) {
  std::mt19937_64 rng(4);
  const auto x = uniform_values(rng, 30, 0, 1);
  double last = 1.1;
  for (double sigma : {2.0, 0.5, 0.1, 0.01}) {
    std::mt19937_64 local(9);
    const auto y = noisy_line(local, x, 0.0, 1.0, sigma);
    const double p = pearson({x, y}).p_value;
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, last);
    last = p;
  }
}

// Kendall ---------------------------------------------------------------------

TEST(Kendall, PerfectAndReversed) {
  EXPECT_EQ(kendall_tau({{1, 2, 3, 4}, {1, 2, 3, 4}}).value, 1.0);
  EXPECT_EQ(kendall_tau({{1, 2, 3, 4}, {4, 3, 2, 1}}).value, -1.0);
}

TEST(Kendall, TiesMatchPairCountingExactly) {
  std::mt19937_64 rng(30);
  const auto x = small_ints(rng, 30, 5);
  const auto y = small_ints(rng, 30, 4);
  EXPECT_EQ(kendall_tau({x, y}).value, oracle::kendall_tau_b(x, y));
}

TEST(Kendall, MergeCountEqualsBruteForceOnRandomSeries) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 60;
    const bool ties = trial % 2 == 0;
    auto x = ties ? small_ints(rng, n, 6) : uniform_values(rng, n, 0, 1);
    auto y = ties ? small_ints(rng, n, 3) : uniform_values(rng, n, 0, 1);
    try {
      const double got = kendall_tau({x, y}).value;
      EXPECT_EQ(got, oracle::kendall_tau_b(x, y)) << "trial " << trial;
    } catch (const UndefinedStatistic&) {
      const auto k = oracle::kendall_pairs(x, y);
      const auto n0 = static_cast<std::int64_t>(n * (n - 1) / 2);
      EXPECT_TRUE(k.tie_x_only + k.tie_both == n0 || k.tie_y_only + k.tie_both == n0);
    }
  }
}

TEST(Kendall, MonotoneTransformInvariance) {
  std::mt19937_64 rng(32);
  const auto x = uniform_values(rng, 40, 0.1, 3);
  const auto y = noisy_line(rng, x, 0, 1, 0.5);
  std::vector<double> ex;
  for (double v : x) ex.push_back(std::exp(v) * 2 + 1);
  EXPECT_EQ(kendall_tau({x, y}).value, kendall_tau({ex, y}).value);
}

TEST(Kendall, AllTiedIsUndefined) { EXPECT_THROW(kendall_tau({{2, 2, 2}, {1, 2, 3}}), UndefinedStatistic); }

TEST(Kendall, PValueAgainstHandWorkedNoTieCase) {
  // n = 10, S = 45 - 2*3 = 39, var = 10*9*25/18 = 125.
  const auto c = kendall_tau({{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {1, 3, 2, 4, 6, 5, 7, 9, 8, 10}});
  EXPECT_NEAR(c.value, 39.0 / 45.0, 1e-15);
  EXPECT_NEAR(c.p_value, std::erfc(39.0 / std::sqrt(125.0) / std::sqrt(2.0)), 1e-15);
}

// Binning and chi-squared ------------------------------------------------------

TEST(BinCounts, ClinicalBins) {
  EXPECT_EQ(bin_counts({0.5, 1.0, 30.0}, BinEdges::clinical_percent()), (std::vector<std::int64_t>{1, 1, 1, 0, 0}));
  EXPECT_EQ(bin_counts({0, 0, 0, 0}, BinEdges::clinical_percent()), (std::vector<std::int64_t>{4, 0, 0, 0, 0}));
  EXPECT_EQ(bin_counts({100.0, 75.0, 74.999}, BinEdges::clinical_percent()),
            (std::vector<std::int64_t>{0, 0, 0, 1, 2}));
  EXPECT_THROW(bin_counts({100.5}, BinEdges::clinical_percent()), InputError);
  EXPECT_THROW(bin_counts({-0.1}, BinEdges::clinical_percent()), InputError);
}

TEST(BinCounts, RandomPercentsMatchLoop) {
  std::mt19937_64 rng(41);
  const auto v = uniform_values(rng, 100, 0, 100);
  const auto counts = bin_counts(v, BinEdges::clinical_percent());
  std::vector<std::int64_t> want(5, 0);
  for (double x : v) {
    if (x < 1) ++want[0];
    else if (x < 25) ++want[1];
    else if (x < 50) ++want[2];
    else if (x < 75) ++want[3];
    else ++want[4];
  }
  EXPECT_EQ(counts, want);
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  EXPECT_EQ(total, 100);
}

TEST(BinCounts, IntegerScoreBins) {
  const auto e = BinEdges::integer_scores(20);
  EXPECT_EQ(e.bins(), 21U);
  const auto c = bin_counts({0, 20, 20, 7}, e);
  EXPECT_EQ(c[0], 1);
  EXPECT_EQ(c[7], 1);
  EXPECT_EQ(c[20], 2);
  EXPECT_THROW(bin_counts({21}, e), InputError);
}

TEST(Chi2, PerfectAgreement) {
  const auto r = chi2_contingency({10, 10, 10}, {10, 10, 10});
  EXPECT_EQ(r.chi2, 0.0);
  EXPECT_EQ(r.dof, 2);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Chi2, DisjointRows) {
  const auto r = chi2_contingency({10, 0}, {0, 10});
  EXPECT_DOUBLE_EQ(r.chi2, 20.0);
  EXPECT_EQ(r.dof, 1);
}

TEST(Chi2, EmptyColumnsDroppedBeforeDof) {
  const auto r = chi2_contingency({5, 0, 3, 0}, {4, 0, 4, 0});
  EXPECT_EQ(r.dof, 1);
  EXPECT_EQ(r.kept_columns, (std::vector<std::size_t>{0, 2}));
  const auto one = chi2_contingency({7, 0}, {7, 0});
  EXPECT_EQ(one.dof, 0);
  EXPECT_EQ(one.chi2, 0.0);
  EXPECT_EQ(one.p_value, 1.0);
}

TEST(Chi2, RandomTablesMatchOracle) {
  std::mt19937_64 rng(50);
  std::uniform_int_distribution<int> u(0, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::int64_t> a(5), b(5);
    for (int j = 0; j < 5; ++j) {
      a[j] = u(rng);
      b[j] = u(rng);
    }
    a[0] += 1;
    b[1] += 1;
    const auto got = chi2_contingency(a, b);
    const auto want = oracle::chi2(a, b);
    EXPECT_NEAR(got.chi2, want.stat, 1e-10);
    EXPECT_EQ(got.dof, want.dof);
    EXPECT_NEAR(got.p_value, want.p, 1e-8);
  }
}

TEST(Chi2, SymmetricAndScales) {
  const std::vector<std::int64_t> a{12, 5, 9, 1, 0}, b{8, 9, 3, 4, 2};
  const auto ab = chi2_contingency(a, b);
  const auto ba = chi2_contingency(b, a);
  EXPECT_NEAR(ab.chi2, ba.chi2, 1e-12);
  std::vector<std::int64_t> a3, b3;
  for (auto v : a) a3.push_back(3 * v);
  for (auto v : b) b3.push_back(3 * v);
  EXPECT_NEAR(chi2_contingency(a3, b3).chi2, 3.0 * ab.chi2, 1e-10);
  EXPECT_LT(chi2_contingency(a3, b3).p_value, ab.p_value);
}

TEST(Chi2, ZeroRowIsAnError) { EXPECT_THROW(chi2_contingency({0, 0}, {1, 2}), InputError); }

// Regression ------------------------------------------------------------------

TEST(Linfit, ExactLine) {
  const auto f = linfit({{3, 5, 7, 9}, {1, 2, 3, 4}});
  EXPECT_NEAR(f.beta0, 1.0, 1e-14);
  EXPECT_NEAR(f.beta1, 2.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
  EXPECT_NEAR(f.residual_se, 0.0, 1e-14);
}

TEST(Linfit, Identity) {
  const auto f = linfit({{0.5, 3, 11, 40}, {0.5, 3, 11, 40}});
  EXPECT_EQ(f.beta0, 0.0);
  EXPECT_EQ(f.beta1, 1.0);
  EXPECT_EQ(f.r2, 1.0);
  EXPECT_EQ(f.mean_abs_error, 0.0);
  EXPECT_EQ(f.rmse_about_fit, 0.0);
}

TEST(Linfit, NoisyLineMatchesNormalEquations) {
  std::mt19937_64 rng(60);
  const auto pred = uniform_values(rng, 50, 0, 60);
  const auto gt = noisy_line(rng, pred, 0.03, 0.84, 4.0);
  const auto f = linfit({gt, pred});
  const auto o = oracle::ols(pred, gt);
  EXPECT_NEAR(f.beta0, o.b0, 1e-10);
  EXPECT_NEAR(f.beta1, o.b1, 1e-10);
  EXPECT_NEAR(f.beta0_ci.lo, o.b0_lo, 1e-10);
  EXPECT_NEAR(f.beta0_ci.hi, o.b0_hi, 1e-10);
  EXPECT_NEAR(f.beta1_ci.lo, o.b1_lo, 1e-10);
  EXPECT_NEAR(f.beta1_ci.hi, o.b1_hi, 1e-10);
  EXPECT_NEAR(f.r2, o.r2, 1e-10);
  EXPECT_LE(f.beta1_ci.lo, f.beta1);
  EXPECT_GE(f.beta1_ci.hi, f.beta1);
}

TEST(Linfit, ResidualsSumToZero) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pred = uniform_values(rng, 3 + trial, -10, 10);
    const auto gt = noisy_line(rng, pred, 2.0, -0.5, 3.0);
    const auto f = linfit({gt, pred});
    double sum = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) sum += gt[i] - f.beta0 - f.beta1 * pred[i];
    EXPECT_NEAR(sum, 0.0, 1e-9);
    EXPECT_GE(f.r2, 0.0);
    EXPECT_LE(f.r2, 1.0);
  }
}

TEST(Linfit, Preconditions) {
  EXPECT_THROW(linfit({{1, 2}, {1, 2}}), UndefinedStatistic);
  EXPECT_THROW(linfit({{1, 2, 3}, {4, 4, 4}}), UndefinedStatistic);
  EXPECT_THROW(PairedSeries({1, 2}, {1}), InputError);
  EXPECT_THROW(PairedSeries({1, NAN}, {1, 2}), InputError);
}

}  // namespace
}  // namespace lungsev::stats
