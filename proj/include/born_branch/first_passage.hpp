// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>

#include "born_branch/error.hpp"
#include "born_branch/special.hpp"

namespace born {

namespace detail {

inline void check_first_passage_args(double sigma, double d, double tau) {
  require(d > 0.0, ErrorKind::DomainError, "start distance d must be positive");
  require(sigma > 0.0, ErrorKind::DomainError, "sigma must be positive");
  require(tau >= 0.0, ErrorKind::DomainError, "tau must be non-negative");
}

}  // namespace detail

/// log P(no absorption by tau) for dX = -mu dt + sigma dW started d above the barrier.
///
/// P = N((d - mu tau)/(sigma sqrt tau)) - exp(2 mu d / sigma^2) N((-d - mu tau)/(sigma sqrt tau)).
/// In the lower tail both terms share the factor phi(a), leaving a difference of Mills ratios.
inline double log_survival_closed_form(double mu, double sigma, double d, double tau) {
  detail::check_first_passage_args(sigma, d, tau);
  if (tau == 0.0) return 0.0;
  const double s = sigma * std::sqrt(tau);
  const double a = (d - mu * tau) / s;
  const double b = (-d - mu * tau) / s;
  if (a < -5.0) {
    const double diff = mills_ratio(-a) - mills_ratio(-b);
    return -0.5 * a * a - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(diff);
  }
  const double la = log_normal_cdf(a);
  const double lb = 2.0 * mu * d / (sigma * sigma) + log_normal_cdf(b);
  return log_diff_exp(la, lb);
}

inline double survival_closed_form(double mu, double sigma, double d, double tau) {
  return std::exp(log_survival_closed_form(mu, sigma, d, tau));
}

/// Leading large-tau order of the closed form (mu > 0):
/// 2 sigma d e^{mu d/sigma^2} / (mu^2 sqrt(2 pi) tau^{3/2}) * exp(-mu^2 tau / (2 sigma^2)).
inline double log_survival_asymptotic(double mu, double sigma, double d, double tau) {
  detail::check_first_passage_args(sigma, d, tau);
  require(mu > 0.0, ErrorKind::DomainError, "the large-tau form needs mu > 0");
  const double s2 = sigma * sigma;
  return std::log(2.0 * sigma * d / (mu * mu * std::sqrt(2.0 * std::numbers::pi))) + mu * d / s2 -
         1.5 * std::log(tau) - mu * mu * tau / (2.0 * s2);
}

inline double survival_asymptotic(double mu, double sigma, double d, double tau) {
  return std::exp(log_survival_asymptotic(mu, sigma, d, tau));
}

/// The linear-in-d form 2d/(sigma sqrt(2 pi tau)) exp(-mu^2 tau/(2 sigma^2)).
inline double survival_linear_asymptote(double mu, double sigma, double d, double tau) {
  detail::check_first_passage_args(sigma, d, tau);
  return 2.0 * d / (sigma * std::sqrt(2.0 * std::numbers::pi * tau)) *
         std::exp(-mu * mu * tau / (2.0 * sigma * sigma));
}

/// Driftless case by reflection: 2 N(d/(sigma sqrt tau)) - 1.
inline double survival_reflection(double sigma, double d, double tau) {
  detail::check_first_passage_args(sigma, d, tau);
  if (tau == 0.0) return 1.0;
  return std::erf(d / (sigma * std::sqrt(2.0 * tau)));
}

/// Barrier shift of a Gaussian random walk relative to its diffusion limit, -zeta(1/2)/sqrt(2 pi).
inline constexpr double kSiegmundShift = 0.5825971579390106;

}  // namespace born
