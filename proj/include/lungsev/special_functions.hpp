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

// Regularized incomplete gamma / beta and the tail probabilities built on
// them. Series and modified-Lentz continued fractions, relative step
// tolerance of a few ulps.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "lungsev/error.hpp"

namespace lungsev::stats {

namespace detail {

inline constexpr int kMaxIterations = 100000;
inline constexpr double kEps = 3e-16;
inline constexpr double kTiny = 1e-300;

/// P(a, x) by its power series; good for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw ConvergenceError("incomplete gamma series did not converge for a=" + std::to_string(a) +
                         " x=" + std::to_string(x));
}

/// Q(a, x) by Legendre's continued fraction; good for x >= a + 1.
inline double gamma_q_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  }
  throw ConvergenceError("incomplete gamma fraction did not converge for a=" + std::to_string(a) +
                         " x=" + std::to_string(x));
}

/// Continued fraction for I_x(a, b).
inline double beta_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < kMaxIterations; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw ConvergenceError("incomplete beta fraction did not converge for a=" + std::to_string(a) +
                         " b=" + std::to_string(b) + " x=" + std::to_string(x));
}

}  // namespace detail

/// Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
inline double reg_inc_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a)) {
    throw InputError("reg_inc_gamma_q needs a > 0, x >= 0");
  }
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

inline double reg_inc_gamma_p(double a, double x) { return 1.0 - reg_inc_gamma_q(a, x); }

/// Regularized incomplete beta I_x(a, b).
inline double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw InputError("reg_inc_beta needs a, b > 0 and x in [0,1]");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_fraction(b, a, 1.0 - x) / b;
}

/// P(T > t) for Student's t with `dof` degrees of freedom.
inline double student_t_sf(double t, double dof) {
  if (!(dof > 0.0)) throw InputError("student_t_sf needs dof > 0");
  if (std::isnan(t)) throw InputError("student_t_sf got NaN");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * reg_inc_beta(dof / 2.0, 0.5, x);
  return t >= 0.0 ? tail : 1.0 - tail;
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

/// Upper quantile: t such that student_t_sf(t, dof) = p, for p in (0, 1).
inline double student_t_isf(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("student_t_isf needs p in (0,1)");
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -student_t_isf(1.0 - p, dof);
  // Bracket then bisect; sf is monotone decreasing in t.
  double lo = 0.0;
  double hi = 1.0;
  while (student_t_sf(hi, dof) > p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw ConvergenceError("student_t_isf failed to bracket");
  }
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (student_t_sf(mid, dof) > p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace lungsev::stats
