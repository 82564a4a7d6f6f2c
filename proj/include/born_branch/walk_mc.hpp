// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "born_branch/analytics.hpp"
#include "born_branch/error.hpp"
#include "born_branch/first_passage.hpp"
#include "born_branch/model_core.hpp"
#include "born_branch/parallel.hpp"
#include "born_branch/rng.hpp"

namespace born {

struct SurvivalEstimate {
  double p_hat = 0.0;
  double se = 0.0;
  std::uint64_t n_paths = 0;
  std::uint64_t n_survivors = 0;
};

inline SurvivalEstimate make_survival_estimate(std::uint64_t n_survivors, std::uint64_t n_paths) {
  SurvivalEstimate e;
  e.n_paths = n_paths;
  e.n_survivors = n_survivors;
  e.p_hat = n_paths ? static_cast<double>(n_survivors) / static_cast<double>(n_paths) : 0.0;
  e.se = n_paths ? std::sqrt(e.p_hat * (1.0 - e.p_hat) / static_cast<double>(n_paths)) : 0.0;
  return e;
}

struct WalkPathOutcome {
  bool survived = true;
  double final_x = 0.0;                 // meaningful only when survived
  std::optional<double> absorption_time;  // first t below the barrier
};

inline constexpr double kRareEventFloor = 1e-8;

namespace detail {

inline void check_walk_barrier(const ThresholdSchedule& barrier) {
  require(!std::holds_alternative<Endogenous>(barrier), ErrorKind::InvalidSpec,
          "walk simulation takes an exogenous or random barrier");
}

}  // namespace detail

/// X_s = X_{s-1} - mu + sigma U_s, absorbed when the proposal falls below the barrier.
inline WalkPathOutcome simulate_walk(const WalkParams& params, double x0, const ThresholdSchedule& barrier,
                                     std::int64_t t, RngStream& rng) {
  detail::check_walk_barrier(barrier);
  const double log_eps = barrier_log_epsilon(barrier);
  require(x0 > log_eps, ErrorKind::BadStart, "x0 must lie above the barrier log(epsilon)");
  const auto* random = std::get_if<RandomBarrier>(&barrier);
  const double noise = random ? random->noise_sd : 0.0;
  double x = x0;
  for (std::int64_t s = 1; s <= t; ++s) {
    x += -params.mu + params.sigma * draw_shock(params.shock_law, rng);
    const double level = noise > 0.0 ? log_eps + noise * rng.normal() : log_eps;
    if (x < level) return {false, 0.0, static_cast<double>(s)};
  }
  return {true, x, std::nullopt};
}

/// Survival for the walk predicted from the diffusion limit with the discrete-barrier shift.
inline double predicted_walk_survival(const WalkParams& params, double d, std::int64_t t) {
  const double d_eff = d + kSiegmundShift * params.sigma;
  return survival_closed_form(params.mu, params.sigma, d_eff, static_cast<double>(t));
}

struct EstimateOptions {
  unsigned workers = 1;
  bool rare_event_guard = true;
};

inline SurvivalEstimate estimate_survival(const WalkParams& params, double x0, const ThresholdSchedule& barrier,
                                          std::int64_t t, std::uint64_t n_paths, std::uint64_t seed,
                                          const EstimateOptions& opt = {}) {
  require(n_paths >= 1, ErrorKind::OutOfRange, "n_paths must be at least 1");
  detail::check_walk_barrier(barrier);
  const double d = x0 - barrier_log_epsilon(barrier);
  require(d > 0.0, ErrorKind::BadStart, "x0 must lie above the barrier log(epsilon)");
  if (t == 0) return make_survival_estimate(n_paths, n_paths);
  if (opt.rare_event_guard) {
    const double predicted = predicted_walk_survival(params, d, t);
    require(predicted >= kRareEventFloor, ErrorKind::RareEvent,
            "predicted survival " + std::to_string(predicted) +
                " is below 1e-8; use the diffusion closed form instead");
  }
  const auto survivors = block_reduce<std::uint64_t>(
      n_paths, opt.workers, 0,
      [&](std::size_t begin, std::size_t end) {
        std::uint64_t n = 0;
        for (std::size_t i = begin; i < end; ++i) {
          auto rng = rng_stream(seed, i);
          n += simulate_walk(params, x0, barrier, t, rng).survived;
        }
        return n;
      },
      [](std::uint64_t& acc, std::uint64_t v) { acc += v; });
  return make_survival_estimate(survivors, n_paths);
}

struct SurvivalRatio {
  double ratio = 0.0;
  double se = 0.0;
  double theory = 0.0;
  SurvivalEstimate a;
  SurvivalEstimate b;
  std::uint64_t n_both = 0;
};

/// Paired-arm ratio p(x_a)/p(x_b): path i of each arm consumes stream (seed, i).
///
/// The SE is the delta method on log p_a - log p_b including the CRN covariance.
inline SurvivalRatio survival_ratio(const WalkParams& params, double x_a, double x_b, const ThresholdSchedule& barrier,
                                    std::int64_t t, std::uint64_t n_paths, std::uint64_t seed,
                                    const EstimateOptions& opt = {}) {
  require(n_paths >= 1, ErrorKind::OutOfRange, "n_paths must be at least 1");
  detail::check_walk_barrier(barrier);
  const double log_eps = barrier_log_epsilon(barrier);
  require(x_a > log_eps && x_b > log_eps, ErrorKind::BadStart, "both starts must lie above the barrier");
  if (opt.rare_event_guard && t > 0) {
    const double predicted = predicted_walk_survival(params, std::min(x_a, x_b) - log_eps, t);
    require(predicted >= kRareEventFloor, ErrorKind::RareEvent,
            "predicted survival " + std::to_string(predicted) + " is below 1e-8");
  }
  struct Counts {
    std::uint64_t a = 0, b = 0, both = 0;
  };
  const auto c = block_reduce<Counts>(
      n_paths, opt.workers, Counts{},
      [&](std::size_t begin, std::size_t end) {
        Counts k;
        for (std::size_t i = begin; i < end; ++i) {
          auto ra = rng_stream(seed, i);
          auto rb = rng_stream(seed, i);
          const bool sa = simulate_walk(params, x_a, barrier, t, ra).survived;
          const bool sb = simulate_walk(params, x_b, barrier, t, rb).survived;
          k.a += sa;
          k.b += sb;
          k.both += sa && sb;
        }
        return k;
      },
      [](Counts& acc, const Counts& v) {
        acc.a += v.a;
        acc.b += v.b;
        acc.both += v.both;
      });
  require(c.b > 0, ErrorKind::ZeroDenominator, "no survivors in the x_b arm; increase n_paths");
  SurvivalRatio r;
  r.a = make_survival_estimate(c.a, n_paths);
  r.b = make_survival_estimate(c.b, n_paths);
  r.n_both = c.both;
  r.theory = std::exp(params.beta() * (x_a - x_b));
  r.ratio = r.a.p_hat / r.b.p_hat;
  if (c.a == 0) return r;
  const double n = static_cast<double>(n_paths);
  const double pa = r.a.p_hat, pb = r.b.p_hat, pab = static_cast<double>(c.both) / n;
  const double var_log = ((pa * (1 - pa)) / (pa * pa) + (pb * (1 - pb)) / (pb * pb) - 2 * (pab - pa * pb) / (pa * pb)) / n;
  r.se = r.ratio * std::sqrt(std::max(0.0, var_log));
  return r;
}

struct BetaFit {
  FitResult fit;
  std::vector<double> xs;
  std::vector<double> log_p;
  std::vector<SurvivalEstimate> estimates;
};

/// Exponent from regressing log p_hat on x0 over several starts, all sharing CRN streams.
inline BetaFit fit_walk_beta(const WalkParams& params, std::span<const double> starts,
                             const ThresholdSchedule& barrier, std::int64_t t, std::uint64_t n_paths,
                             std::uint64_t seed, const EstimateOptions& opt = {}) {
  BetaFit out;
  for (double x0 : starts) {
    auto e = estimate_survival(params, x0, barrier, t, n_paths, seed, opt);
    require(e.n_survivors > 0, ErrorKind::ZeroDenominator, "a start point has no survivors");
    out.xs.push_back(x0);
    out.log_p.push_back(std::log(e.p_hat));
    out.estimates.push_back(e);
  }
  out.fit = fit_power_law(out.xs, out.log_p);
  return out;
}

}  // namespace born
