// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>

namespace born {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Mills ratio Phi(-a)/phi(a) for a >= 5 by Lentz's continued fraction.
inline double mills_ratio(double a) {
  // R(a) = 1/(a + 1/(a + 2/(a + 3/(a + ...))))
  constexpr double tiny = 1e-300;
  double f = a, c = a, d = 0.0;
  for (int k = 1; k < 500; ++k) {
    d = a + k * d;
    if (d == 0.0) d = tiny;
    c = a + k / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / f;
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// log Phi(x), accurate deep into the lower tail where Phi underflows.
inline double log_normal_cdf(double x) {
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  if (x > -20.0) return std::log(normal_cdf(x));
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(mills_ratio(-x));
}

/// log(exp(a) - exp(b)) for a >= b.
inline double log_diff_exp(double a, double b) {
  if (b == -INFINITY) return a;
  if (b >= a) return -INFINITY;
  return a + std::log(-std::expm1(b - a));
}

/// log(exp(a) + exp(b)).
inline double log_add_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace born
