// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "born_branch/error.hpp"
#include "born_branch/parallel.hpp"
#include "born_branch/rng.hpp"
#include "born_branch/special.hpp"

namespace born {

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double r_squared = 1.0;
  std::size_t n_points = 0;
};

/// Ordinary least squares of ys on xs. The slope is the fitted exponent.
inline FitResult fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorKind::DegenerateDesign, "xs and ys differ in length");
  const std::size_t n = xs.size();
  require(n >= 2, ErrorKind::DegenerateDesign, "need at least two points");
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  long double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  require(sxx > 0, ErrorKind::DegenerateDesign, "all xs are equal");
  FitResult r;
  r.n_points = n;
  const long double slope = sxy / sxx;
  r.slope = static_cast<double>(slope);
  r.intercept = static_cast<double>(my - slope * mx);
  long double ssr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double e = ys[i] - (r.intercept + slope * xs[i]);
    ssr += e * e;
  }
  r.stderr_slope = n > 2 ? static_cast<double>(std::sqrt(ssr / (n - 2) / sxx)) : 0.0;
  r.r_squared = syy > 0 ? std::clamp(static_cast<double>(1.0L - ssr / syy), 0.0, 1.0) : 1.0;
  return r;
}

/// Kolmogorov-Smirnov distance between a sorted sample and a continuous CDF.
template <class Cdf>
double ks_distance(std::span<const double> sorted, Cdf&& cdf) {
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

template <class Cdf>
double ks_distance_unsorted(std::vector<double> sample, Cdf&& cdf) {
  std::sort(sample.begin(), sample.end());
  return ks_distance(std::span<const double>(sample), std::forward<Cdf>(cdf));
}

/// Asymptotic Kolmogorov distribution P(sqrt(n) D <= x).
inline double kolmogorov_cdf(double x) {
  if (x <= 0.0) return 0.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(1.0 - 2.0 * s, 0.0, 1.0);
}

/// Critical value c with P(sqrt(n) D <= c) = p; 1.6276 at p = 0.99.
inline double kolmogorov_quantile(double p) {
  double lo = 0.2, hi = 5.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Binomial tails

/// Compensated log-sum-exp accumulator.
class LogSum {
 public:
  void add(double log_term) {
    if (log_term == -INFINITY) return;
    if (log_term > max_) {
      // rescale the running sum to the new maximum
      const double scale = std::exp(max_ - log_term);
      sum_ *= scale;
      comp_ *= scale;
      max_ = log_term;
    }
    const double y = std::exp(log_term - max_) - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_ > 0.0 ? max_ + std::log(sum_) : -INFINITY; }

 private:
  double max_ = -INFINITY;
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double log_binomial_pmf(std::int64_t n, std::int64_t k, double log_p, double log_q) {
  const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  const double a = k == 0 ? 0.0 : k * log_p;
  const double b = n - k == 0 ? 0.0 : (n - k) * log_q;
  return lc + a + b;
}

struct IntervalLogProb {
  double log_inside;
  double log_outside;
};

/// log P(lo <= S <= hi) and log P(S outside [lo, hi]) for S ~ Binomial(n, p).
inline IntervalLogProb binomial_interval_logprob(std::int64_t n, double p, std::int64_t lo, std::int64_t hi) {
  require(n >= 0 && 0 <= lo && lo <= hi && hi <= n, ErrorKind::OutOfRange, "need 0 <= lo <= hi <= n");
  require(p >= 0.0 && p <= 1.0, ErrorKind::OutOfRange, "p must lie in [0,1]");
  const double log_p = p > 0.0 ? std::log(p) : -INFINITY;
  const double log_q = p < 1.0 ? std::log1p(-p) : -INFINITY;
  LogSum inside, outside;
  for (std::int64_t k = 0; k <= n; ++k) {
    const double lt = log_binomial_pmf(n, k, log_p, log_q);
    (k >= lo && k <= hi ? inside : outside).add(lt);
  }
  return {inside.value(), outside.value()};
}

struct CountFraction {
  double log10_value;
  mpz_class numerator;
  mpz_class denominator;
};

/// Exact sum_{k=lo..hi} C(n,k) / 2^n in big integers.
inline CountFraction binomial_count_fraction(unsigned long n, unsigned long lo, unsigned long hi) {
  require(lo <= hi && hi <= n, ErrorKind::OutOfRange, "need 0 <= lo <= hi <= n");
  mpz_class num = 0, c;
  for (unsigned long k = lo; k <= hi; ++k) {
    mpz_bin_uiui(c.get_mpz_t(), n, k);
    num += c;
  }
  mpz_class den = 1;
  den <<= n;
  // log10 via mantissa/exponent so neither side has to fit a double
  long e_num = 0, e_den = 0;
  const double m_num = mpz_get_d_2exp(&e_num, num.get_mpz_t());
  const double m_den = mpz_get_d_2exp(&e_den, den.get_mpz_t());
  const double log10v = std::log10(m_num / m_den) + static_cast<double>(e_num - e_den) * std::log10(2.0);
  return {num == 0 ? -INFINITY : log10v, num, den};
}

/// Exact comparison numerator/denominator < 10^power for a (possibly negative) integer power.
inline bool fraction_less_than_pow10(const CountFraction& f, long power) {
  mpz_class ten_pow;
  mpz_ui_pow_ui(ten_pow.get_mpz_t(), 10, static_cast<unsigned long>(std::abs(power)));
  if (power >= 0) return f.numerator < f.denominator * ten_pow;
  return f.numerator * ten_pow < f.denominator;
}

// ---------------------------------------------------------------------------
// Quantiles and bootstrap

/// Linear-interpolation (type 7) quantile of an unsorted sample.
inline double quantile(std::vector<double> sample, double q) {
  require(!sample.empty(), ErrorKind::EmptySample, "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, ErrorKind::OutOfRange, "q must lie in [0,1]");
  const double h = q * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(sample.begin(), sample.begin() + lo, sample.end());
  const double a = sample[lo];
  if (lo + 1 >= sample.size()) return a;
  const double b = *std::min_element(sample.begin() + lo + 1, sample.end());
  return a + (h - lo) * (b - a);
}

inline double median(std::vector<double> sample) { return quantile(std::move(sample), 0.5); }

struct Interval {
  double lo;
  double hi;
};

/// Percentile bootstrap interval; resample b draws from stream (seed, b).
inline Interval bootstrap_ci(std::span<const double> sample,
                             const std::function<double(std::vector<double>)>& statistic, std::size_t n_boot,
                             std::uint64_t seed, double level = 0.95, unsigned workers = 1) {
  require(!sample.empty(), ErrorKind::EmptySample, "bootstrap of an empty sample");
  require(n_boot >= 2, ErrorKind::OutOfRange, "need at least two resamples");
  std::vector<double> stats(n_boot);
  for_each_block(n_boot, 16, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> draw(sample.size());
    for (std::size_t b = begin; b < end; ++b) {
      auto rng = rng_stream(seed, b);
      for (auto& v : draw) v = sample[rng.below(sample.size())];
      stats[b] = statistic(draw);
    }
  });
  const double tail = 0.5 * (1.0 - level);
  return {quantile(stats, tail), quantile(stats, 1.0 - tail)};
}

inline double mean(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::EmptySample, "mean of an empty sample");
  long double s = 0;
  for (double x : xs) s += x;
  return static_cast<double>(s / xs.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
  require(xs.size() >= 2, ErrorKind::EmptySample, "variance needs two values");
  const long double m = mean(xs);
  long double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return static_cast<double>(s / (xs.size() - 1));
}

}  // namespace born
