// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "born_branch/analytics.hpp"
#include "born_branch/error.hpp"
#include "born_branch/first_passage.hpp"
#include "born_branch/model_core.hpp"
#include "born_branch/parallel.hpp"
#include "born_branch/rng.hpp"
#include "born_branch/walk_mc.hpp"

namespace born {

/// Default Euler step 0.01 min(1, sigma^2/mu^2).
inline double default_dt(double mu, double sigma) {
  if (mu == 0.0) return 0.01;
  return 0.01 * std::min(1.0, sigma * sigma / (mu * mu));
}

namespace detail {

/// One path of dY = -mu dt + sigma dW from y0 > 0, absorbed at 0, over [0, tau].
inline WalkPathOutcome diffuse_distance(double mu, double sigma, double y0, double tau, double dt, RngStream& rng,
                                        bool bridge) {
  const std::int64_t n = static_cast<std::int64_t>(std::ceil(tau / dt - 1e-9));
  const double var_dt = sigma * sigma * dt;
  const double sd_dt = sigma * std::sqrt(dt);
  double y = y0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double t0 = static_cast<double>(i) * dt;
    const bool last = i == n - 1;
    const double h = last ? tau - t0 : dt;
    const double y1 = y - mu * h + (last ? sigma * std::sqrt(h) : sd_dt) * rng.normal();
    if (y1 < 0.0) return {false, 0.0, t0 + h * y / (y - y1)};
    if (bridge) {
      const double u = rng.uniform();
      if (u < std::exp(-2.0 * y * y1 / (last ? sigma * sigma * h : var_dt))) return {false, 0.0, t0 + 0.5 * h};
    }
    y = y1;
  }
  return {true, y, std::nullopt};
}

}  // namespace detail

/// Euler scheme for X with Brownian-bridge absorption between grid points.
inline WalkPathOutcome simulate_diffusion(const DiffusionParams& params, double x0, double epsilon, double tau,
                                          double dt, RngStream& rng, bool bridge = true) {
  require(epsilon > 0.0, ErrorKind::OutOfRange, "epsilon must be positive");
  const double log_eps = std::log(epsilon);
  require(x0 > log_eps, ErrorKind::BadStart, "x0 must lie above log(epsilon)");
  require(dt > 0.0 && std::isfinite(dt), ErrorKind::BadStep, "dt must be positive");
  require(params.sigma > 0.0, ErrorKind::OutOfRange, "sigma must be positive");
  auto out = detail::diffuse_distance(params.mu(), params.sigma, x0 - log_eps, tau, dt, rng, bridge);
  if (out.survived) out.final_x += log_eps;
  return out;
}

struct DiffusionRun {
  SurvivalEstimate estimate;
  std::vector<double> endpoints;  // survivor distances above the barrier, in path order
};

inline DiffusionRun run_diffusion_paths(double mu, double sigma, double d, double tau, double dt,
                                        std::uint64_t n_paths, std::uint64_t seed, unsigned workers = 1,
                                        bool bridge = true, bool keep_endpoints = false) {
  require(d > 0.0, ErrorKind::BadStart, "start must lie above the barrier");
  require(dt > 0.0 && std::isfinite(dt), ErrorKind::BadStep, "dt must be positive");
  require(n_paths >= 1, ErrorKind::OutOfRange, "n_paths must be at least 1");
  struct Part {
    std::uint64_t survivors = 0;
    std::vector<double> ends;
  };
  auto part = block_reduce<Part>(
      n_paths, workers, Part{},
      [&](std::size_t begin, std::size_t end) {
        Part p;
        for (std::size_t i = begin; i < end; ++i) {
          auto rng = rng_stream(seed, i);
          const auto o = detail::diffuse_distance(mu, sigma, d, tau, dt, rng, bridge);
          if (!o.survived) continue;
          ++p.survivors;
          if (keep_endpoints) p.ends.push_back(o.final_x);
        }
        return p;
      },
      [](Part& acc, Part& v) {
        acc.survivors += v.survivors;
        acc.ends.insert(acc.ends.end(), v.ends.begin(), v.ends.end());
      });
  return {make_survival_estimate(part.survivors, n_paths), std::move(part.ends)};
}

inline SurvivalEstimate estimate_diffusion_survival(const DiffusionParams& params, double x0, double epsilon,
                                                    double tau, double dt, std::uint64_t n_paths, std::uint64_t seed,
                                                    unsigned workers = 1, bool bridge = true) {
  require(epsilon > 0.0, ErrorKind::OutOfRange, "epsilon must be positive");
  return run_diffusion_paths(params.mu(), params.sigma, x0 - std::log(epsilon), tau, dt, n_paths, seed, workers,
                             bridge)
      .estimate;
}

// ---------------------------------------------------------------------------
// Deterministic ratio check

struct RatioRow {
  double tau;
  double ratio;
  double target;
};

inline std::vector<RatioRow> theorem3_ratio_check(const DiffusionParams& params, double x_a, double x_b,
                                                  double epsilon, std::span<const double> tau_grid) {
  const double log_eps = std::log(epsilon);
  require(x_a > log_eps && x_b > log_eps, ErrorKind::BadStart, "both starts must lie above log(epsilon)");
  const double mu = params.mu(), sigma = params.sigma;
  const double target = std::exp(params.beta() * (x_a - x_b));
  std::vector<RatioRow> rows;
  for (double tau : tau_grid) {
    const double lr = log_survival_closed_form(mu, sigma, x_a - log_eps, tau) -
                      log_survival_closed_form(mu, sigma, x_b - log_eps, tau);
    rows.push_back({tau, std::exp(lr), target});
  }
  return rows;
}

/// Slope of log survival against the start point at one horizon.
inline FitResult closed_form_exponent(const DiffusionParams& params, std::span<const double> starts, double epsilon,
                                      double tau) {
  const double log_eps = std::log(epsilon);
  std::vector<double> xs, ys;
  for (double x : starts) {
    xs.push_back(x);
    ys.push_back(log_survival_closed_form(params.mu(), params.sigma, x - log_eps, tau));
  }
  return fit_power_law(xs, ys);
}

// ---------------------------------------------------------------------------
// Conditioned endpoint law

struct MemorylessProbe {
  double c;
  double mean_excess;
  double se;
  double z;  // against the unconditioned mean
};

struct ConditionedSample {
  std::vector<double> sample;  // sorted distances above the barrier
  SurvivalEstimate estimate;
  double mean = 0.0;
  double fitted_rate = 0.0;          // 1/mean
  double ks_best_fit = 0.0;          // exponential at the fitted rate, shifted by the barrier
  double ks_best_fit_shifted = 0.0;  // two-parameter fit, shift at the sample minimum
  double rate_mu = 0.0;              // mu/sigma^2
  double rate_2mu = 0.0;             // 2 mu/sigma^2
  double ks_rate_mu = 0.0;
  double ks_rate_2mu = 0.0;
  double gamma2_rate = 0.0;          // 2/mean
  double ks_gamma2 = 0.0;
  double ks_gamma2_rate_mu = 0.0;
  std::vector<MemorylessProbe> memoryless;
  bool memoryless_pass = false;
};

inline double gamma2_cdf(double y, double rate) {
  if (y <= 0.0) return 0.0;
  return -std::expm1(-rate * y) - rate * y * std::exp(-rate * y);
}

inline double exp_cdf(double y, double rate) { return y <= 0.0 ? 0.0 : -std::expm1(-rate * y); }

inline constexpr std::uint64_t kMinConditionedSurvivors = 1000;

/// Survivor endpoints X_tau - log(epsilon) from start x0, with exponential and Gamma(2) fits.
inline ConditionedSample conditioned_sample(const DiffusionParams& params, double x0, double epsilon, double tau,
                                            std::uint64_t n_paths, std::uint64_t seed, double dt = 0.0,
                                            unsigned workers = 1) {
  require(epsilon > 0.0, ErrorKind::OutOfRange, "epsilon must be positive");
  const double mu = params.mu(), sigma = params.sigma;
  const double d = x0 - std::log(epsilon);
  require(d > 0.0, ErrorKind::BadStart, "x0 must lie above log(epsilon)");
  const double expected = static_cast<double>(n_paths) * survival_closed_form(mu, sigma, d, tau);
  require(expected >= kMinConditionedSurvivors, ErrorKind::TooFewSurvivors,
          "expected " + std::to_string(expected) + " survivors, need at least 1000");
  if (dt <= 0.0) dt = default_dt(mu, sigma);
  auto run = run_diffusion_paths(mu, sigma, d, tau, dt, n_paths, seed, workers, true, true);
  require(run.endpoints.size() >= 2, ErrorKind::TooFewSurvivors, "fewer than two survivors");

  ConditionedSample out;
  out.estimate = run.estimate;
  out.sample = std::move(run.endpoints);
  std::sort(out.sample.begin(), out.sample.end());
  const std::span<const double> s(out.sample);
  out.mean = born::mean(s);
  out.fitted_rate = 1.0 / out.mean;
  const double shift = s.front();
  const double rate2 = 1.0 / (out.mean - shift);
  out.rate_mu = mu / (sigma * sigma);
  out.rate_2mu = 2.0 * out.rate_mu;
  out.gamma2_rate = 2.0 / out.mean;
  out.ks_best_fit = ks_distance(s, [&](double y) { return exp_cdf(y, out.fitted_rate); });
  out.ks_best_fit_shifted = ks_distance(s, [&](double y) { return exp_cdf(y - shift, rate2); });
  out.ks_rate_mu = ks_distance(s, [&](double y) { return exp_cdf(y, out.rate_mu); });
  out.ks_rate_2mu = ks_distance(s, [&](double y) { return exp_cdf(y, out.rate_2mu); });
  out.ks_gamma2 = ks_distance(s, [&](double y) { return gamma2_cdf(y, out.gamma2_rate); });
  out.ks_gamma2_rate_mu = ks_distance(s, [&](double y) { return gamma2_cdf(y, out.rate_mu); });

  const double sd0 = std::sqrt(variance(s) / static_cast<double>(s.size()));
  out.memoryless_pass = true;
  for (double mult : {0.5, 1.0, 2.0}) {
    const double c = mult * out.mean;
    std::vector<double> excess;
    for (auto it = std::upper_bound(s.begin(), s.end(), c); it != s.end(); ++it) excess.push_back(*it - c);
    MemorylessProbe p{c, std::numeric_limits<double>::quiet_NaN(), 0.0, std::numeric_limits<double>::infinity()};
    if (excess.size() >= 2) {
      p.mean_excess = born::mean(excess);
      p.se = std::sqrt(variance(excess) / static_cast<double>(excess.size()));
      p.z = std::abs(p.mean_excess - out.mean) / std::hypot(p.se, sd0);
    }
    out.memoryless_pass = out.memoryless_pass && p.z < 3.0;
    out.memoryless.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Steady-state conditional mean

enum class ConditionalMeanMethod { Paths, FlemingViot };

struct ConditionalMeanResult {
  double estimate = 0.0;  // E[exp(X_tau - log eps) | survival]
  double se = 0.0;
  double target = 0.0;    // beta/(beta-1)
  std::uint64_t n_used = 0;
  std::uint64_t resample_count = 0;
};

/// Fleming-Viot cloud at a fixed barrier: absorbed particles restart from a random survivor.
///
/// The cloud approximates the law of Y_tau given survival; `y0` is the common start distance.
inline std::vector<double> fleming_viot_fixed_barrier(double mu, double sigma, double y0, double tau, double dt,
                                                      std::size_t n_particles, std::uint64_t seed,
                                                      std::uint64_t* resample_count = nullptr,
                                                      unsigned workers = 1) {
  require(n_particles >= 2, ErrorKind::OutOfRange, "need at least two particles");
  require(dt > 0.0, ErrorKind::BadStep, "dt must be positive");
  std::vector<double> y(n_particles, y0);
  std::vector<char> dead(n_particles, 0);
  const std::int64_t steps = static_cast<std::int64_t>(std::ceil(tau / dt - 1e-9));
  const double sd = sigma * std::sqrt(dt), var = sigma * sigma * dt;
  std::uint64_t clones = 0;
  std::vector<std::size_t> alive;
  for (std::int64_t step = 0; step < steps; ++step) {
    const std::uint64_t step_seed = derive_seed(seed, static_cast<std::uint64_t>(step));
    for_each_block(n_particles, kPathBlock, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
      auto rng = rng_stream(step_seed, b);
      for (std::size_t i = begin; i < end; ++i) {
        const double y1 = y[i] - mu * dt + sd * rng.normal();
        const double u = rng.uniform();
        dead[i] = y1 < 0.0 || u < std::exp(-2.0 * y[i] * y1 / var);
        y[i] = y1;
      }
    });
    alive.clear();
    for (std::size_t i = 0; i < n_particles; ++i)
      if (!dead[i]) alive.push_back(i);
    require(!alive.empty(), ErrorKind::Extinction, "every particle was absorbed in one step");
    auto pick = rng_stream(step_seed, std::numeric_limits<std::uint64_t>::max());
    for (std::size_t i = 0; i < n_particles; ++i) {
      if (!dead[i]) continue;
      y[i] = y[alive[pick.below(alive.size())]];
      ++clones;
    }
  }
  if (resample_count) *resample_count = clones;
  return y;
}

inline ConditionalMeanResult conditional_mean_ratio(const DiffusionParams& params, double x0, double epsilon,
                                                    double tau, std::uint64_t n_paths, std::uint64_t seed,
                                                    ConditionalMeanMethod method, double dt = 0.0,
                                                    unsigned workers = 1) {
  const double mu = params.mu(), sigma = params.sigma;
  const double beta = params.beta();
  require(beta > 1.0, ErrorKind::DivergentRegime, "the conditional mean diverges unless mu > sigma^2");
  require(epsilon > 0.0, ErrorKind::OutOfRange, "epsilon must be positive");
  const double d = x0 - std::log(epsilon);
  require(d > 0.0, ErrorKind::BadStart, "x0 must lie above log(epsilon)");
  if (dt <= 0.0) dt = default_dt(mu, sigma);
  ConditionalMeanResult r;
  r.target = beta / (beta - 1.0);
  std::vector<double> ys;
  if (method == ConditionalMeanMethod::Paths) {
    const double expected = static_cast<double>(n_paths) * survival_closed_form(mu, sigma, d, tau);
    require(expected >= 100.0, ErrorKind::TooFewSurvivors,
            "expected " + std::to_string(expected) + " survivors; use the Fleming-Viot method");
    ys = run_diffusion_paths(mu, sigma, d, tau, dt, n_paths, seed, workers, true, true).endpoints;
    require(ys.size() >= 2, ErrorKind::TooFewSurvivors, "fewer than two survivors");
  } else {
    ys = fleming_viot_fixed_barrier(mu, sigma, d, tau, dt, n_paths, seed, &r.resample_count, workers);
  }
  std::vector<double> e;
  e.reserve(ys.size());
  for (double y : ys) e.push_back(std::exp(y));
  r.estimate = born::mean(e);
  r.se = std::sqrt(variance(e) / static_cast<double>(e.size()));
  r.n_used = e.size();
  return r;
}

// ---------------------------------------------------------------------------
// Endogenous threshold, Fleming-Viot population

struct PopulationRow {
  double tau;
  double log_xi;
  std::uint64_t n_survivors;
  double mean_z;
};

struct PopulationResult {
  std::vector<PopulationRow> trajectory;
  FitResult fit;            // log xi against tau after burn-in
  double theory_log_alpha;  // sigma^2/(1 - eps) - mu~
  double theory_log_c0;     // log(phi0 eps/(1 - eps))
  std::uint64_t resample_count = 0;
  std::vector<std::uint64_t> survivor_ids;  // rolling hash of survivor identities per step
};

struct PopulationOptions {
  bool clone = true;
  double burn_in_fraction = 0.2;
  std::size_t record_every = 1;
  unsigned workers = 1;
};

/// Particles diffuse, the threshold is re-set from the diffused survivors, low particles are
/// absorbed, and absorbed slots are refilled by clones. Positions are tracked relative to log(phi0).
inline PopulationResult endogenous_population(double tilde_mu, double sigma, double varepsilon,
                                              std::size_t n_particles, double tau, double dt, double phi0,
                                              std::uint64_t seed, const PopulationOptions& opt = {}) {
  require(varepsilon > 0.0 && varepsilon < 1.0, ErrorKind::OutOfRange, "varepsilon must lie in (0,1)");
  require(n_particles >= 1000, ErrorKind::OutOfRange, "need at least 1000 particles");
  require(sigma > 0.0, ErrorKind::OutOfRange, "sigma must be positive");
  require(dt > 0.0 && std::isfinite(dt), ErrorKind::BadStep, "dt must be positive");
  require(phi0 > 0.0, ErrorKind::OutOfRange, "phi0 must be positive");
  const double log_phi0 = std::log(phi0);
  const double log_ve = std::log(varepsilon);
  const std::int64_t steps = static_cast<std::int64_t>(std::ceil(tau / dt - 1e-9));
  const double sd = sigma * std::sqrt(dt);

  std::vector<double> w(n_particles, 0.0);
  std::vector<char> live(n_particles, 1);
  std::vector<std::size_t> alive, dead;
  PopulationResult out;
  const auto ea = endogenous_alpha(tilde_mu, sigma, varepsilon, phi0);
  out.theory_log_alpha = ea.log_alpha;
  out.theory_log_c0 = std::log(ea.c0);

  for (std::int64_t step = 0; step < steps; ++step) {
    const std::uint64_t step_seed = derive_seed(seed, static_cast<std::uint64_t>(step));
    for_each_block(n_particles, kPathBlock, opt.workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
      auto rng = rng_stream(step_seed, b);
      for (std::size_t i = begin; i < end; ++i) {
        const double g = rng.normal();
        if (live[i]) w[i] += -tilde_mu * dt + sd * g;
      }
    });
    double w_max = -INFINITY;
    for (std::size_t i = 0; i < n_particles; ++i)
      if (live[i]) w_max = std::max(w_max, w[i]);
    require(std::isfinite(w_max), ErrorKind::Extinction, "the population is extinct");
    long double sum = 0;
    std::size_t n_live = 0;
    for (std::size_t i = 0; i < n_particles; ++i) {
      if (!live[i]) continue;
      sum += std::exp(w[i] - w_max);
      ++n_live;
    }
    const double log_xi = log_ve + w_max + static_cast<double>(std::log(sum / n_live));

    alive.clear();
    dead.clear();
    long double z_sum = 0;
    std::uint64_t ids = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n_particles; ++i) {
      if (!live[i]) continue;
      if (w[i] < log_xi) {
        dead.push_back(i);
      } else {
        alive.push_back(i);
        z_sum += w[i];
        ids = (ids ^ i) * 1099511628211ULL;
      }
    }
    require(!alive.empty(), ErrorKind::Extinction, "every particle was absorbed in one step");
    out.survivor_ids.push_back(ids);
    const double t_now = static_cast<double>(step + 1) * dt;
    if ((step + 1) % static_cast<std::int64_t>(opt.record_every) == 0 || step + 1 == steps)
      out.trajectory.push_back(
          {t_now, log_xi + log_phi0, alive.size(), static_cast<double>(z_sum / alive.size()) + log_phi0});

    if (opt.clone) {
      auto pick = rng_stream(step_seed, std::numeric_limits<std::uint64_t>::max());
      for (std::size_t i : dead) w[i] = w[alive[pick.below(alive.size())]];
      out.resample_count += dead.size();
    } else {
      for (std::size_t i : dead) live[i] = 0;
    }
  }

  std::vector<double> xs, ys;
  const double burn = opt.burn_in_fraction * tau;
  for (const auto& row : out.trajectory) {
    if (row.tau < burn) continue;
    xs.push_back(row.tau);
    ys.push_back(row.log_xi);
  }
  if (xs.size() >= 2) out.fit = fit_power_law(xs, ys);
  return out;
}

// ---------------------------------------------------------------------------
// Measurement pipeline

struct MeasurementSetup {
  std::vector<double> deltas;
  double sigma;
  double epsilon;
  double tau;

  double mu() const noexcept { return sigma * sigma; }
};

inline MeasurementSetup make_measurement_setup(std::vector<double> deltas, double sigma, double epsilon, double tau) {
  require(!deltas.empty(), ErrorKind::InvalidSpec, "at least one outcome is required");
  double sum = 0.0;
  for (double d : deltas) {
    require(d > 0.0 && d <= 1.0, ErrorKind::InvalidSpec, "outcome weights must lie in (0,1]");
    sum += d;
  }
  require(std::abs(sum - 1.0) <= kSimplexTolerance, ErrorKind::InvalidSpec, "outcome weights must sum to 1");
  require(sigma > 0.0, ErrorKind::OutOfRange, "sigma must be positive");
  require(epsilon > 0.0, ErrorKind::OutOfRange, "epsilon must be positive");
  require(tau > 0.0, ErrorKind::OutOfRange, "tau must be positive");
  return {std::move(deltas), sigma, epsilon, tau};
}

struct MeasurementOptions {
  double stationary_rate = 0.0;  // 0 selects mu/sigma^2
  double dt = 0.0;               // 0 selects 0.01 sigma^2/mu^2
  std::size_t n_boot = 200;
  std::uint64_t min_survivors = 30;
  unsigned workers = 1;
};

struct OutcomeArm {
  double delta;
  std::uint64_t n_assigned = 0;
  std::uint64_t n_survivors = 0;
  double frequency = 0.0;     // share of all survivors
  double frequency_se = 0.0;
  double bayes_weight = 0.0;  // closed-form conditioned frequency
  double median_x0 = 0.0;     // median of X_0 - log eps among survivors
  Interval median_ci{0.0, 0.0};
  double median_exact = 0.0;  // quadrature of the conditioned law
  double target = 0.0;        // log 2 + log(tau delta)
};

struct MeasurementResult {
  std::vector<OutcomeArm> arms;
  std::uint64_t n_paths = 0;
  std::uint64_t n_survivors = 0;
  double stationary_rate = 0.0;
  double dt = 0.0;
};

namespace detail {

/// Integral of r e^{-r y} q(y + log delta, tau) over y, i.e. P(survive | outcome).
inline double arm_survival_weight(double mu, double sigma, double rate, double log_delta, double tau) {
  using boost::math::quadrature::gauss_kronrod;
  const double lo = std::max(0.0, -log_delta);
  auto f = [&](double y) {
    const double u = y + log_delta;
    if (u <= 0.0) return 0.0;
    return rate * std::exp(-rate * y + log_survival_closed_form(mu, sigma, u, tau));
  };
  return gauss_kronrod<double, 61>::integrate(f, lo, std::numeric_limits<double>::infinity(), 15, 1e-12);
}

/// Median of U = X_0 - log eps given survival, density proportional to e^{-r u} q(u, tau).
inline double conditioned_start_median(double mu, double sigma, double rate, double tau) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [&](double u) { return u <= 0.0 ? 0.0 : std::exp(-rate * u + log_survival_closed_form(mu, sigma, u, tau)); };
  const double total = gauss_kronrod<double, 61>::integrate(f, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-12);
  double lo = 0.0, hi = 1.0;
  while (gauss_kronrod<double, 61>::integrate(f, 0.0, hi, 15, 1e-12) < 0.5 * total) hi *= 2.0;
  for (int i = 0; i < 100 && hi - lo > 1e-10 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (gauss_kronrod<double, 61>::integrate(f, 0.0, mid, 15, 1e-12) < 0.5 * total ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Stationary past, uniform outcome draw, independent evolution to tau; per-outcome summaries.
inline MeasurementResult measurement_pipeline(const MeasurementSetup& setup, std::uint64_t n_paths,
                                              std::uint64_t seed, const MeasurementOptions& opt = {}) {
  const std::size_t K = setup.deltas.size();
  const double min_delta = *std::min_element(setup.deltas.begin(), setup.deltas.end());
  require(setup.tau * min_delta >= 20.0, ErrorKind::DomainError, "need tau * min(delta) >= 20");
  require(n_paths >= 1, ErrorKind::OutOfRange, "n_paths must be at least 1");
  const double mu = setup.mu(), sigma = setup.sigma;
  const double rate = opt.stationary_rate > 0.0 ? opt.stationary_rate : mu / (sigma * sigma);
  const double dt = opt.dt > 0.0 ? opt.dt : 0.01 * sigma * sigma / (mu * mu);

  MeasurementResult res;
  res.n_paths = n_paths;
  res.stationary_rate = rate;
  res.dt = dt;
  res.arms.resize(K);
  std::vector<double> weights(K);
  double weight_sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    res.arms[k].delta = setup.deltas[k];
    weights[k] = detail::arm_survival_weight(mu, sigma, rate, std::log(setup.deltas[k]), setup.tau);
    weight_sum += weights[k];
    const double expected = static_cast<double>(n_paths) / K * weights[k];
    require(expected >= static_cast<double>(opt.min_survivors), ErrorKind::TooFewSurvivors,
            "outcome " + std::to_string(k + 1) + " expects only " + std::to_string(expected) + " survivors");
  }
  for (std::size_t k = 0; k < K; ++k) res.arms[k].bayes_weight = weights[k] / weight_sum;

  struct Part {
    std::vector<std::uint64_t> assigned, survivors;
    std::vector<std::vector<double>> x0;
  };
  const Part empty{std::vector<std::uint64_t>(K, 0), std::vector<std::uint64_t>(K, 0),
                   std::vector<std::vector<double>>(K)};
  std::vector<double> log_delta(K);
  for (std::size_t k = 0; k < K; ++k) log_delta[k] = std::log(setup.deltas[k]);
  auto part = block_reduce<Part>(
      n_paths, opt.workers, empty,
      [&](std::size_t begin, std::size_t end) {
        Part p = empty;
        for (std::size_t i = begin; i < end; ++i) {
          auto rng = rng_stream(seed, i);
          const double past = rng.exponential(rate);
          const std::size_t k = K == 1 ? 0 : rng.below(K);
          ++p.assigned[k];
          const double u0 = past + log_delta[k];
          if (u0 <= 0.0) continue;
          if (!detail::diffuse_distance(mu, sigma, u0, setup.tau, dt, rng, true).survived) continue;
          ++p.survivors[k];
          p.x0[k].push_back(u0);
        }
        return p;
      },
      [&](Part& acc, Part& v) {
        for (std::size_t k = 0; k < K; ++k) {
          acc.assigned[k] += v.assigned[k];
          acc.survivors[k] += v.survivors[k];
          acc.x0[k].insert(acc.x0[k].end(), v.x0[k].begin(), v.x0[k].end());
        }
      });

  for (std::size_t k = 0; k < K; ++k) res.n_survivors += part.survivors[k];
  const double median_exact = detail::conditioned_start_median(mu, sigma, rate, setup.tau);
  for (std::size_t k = 0; k < K; ++k) {
    auto& arm = res.arms[k];
    arm.n_assigned = part.assigned[k];
    arm.n_survivors = part.survivors[k];
    require(arm.n_survivors >= opt.min_survivors, ErrorKind::TooFewSurvivors,
            "outcome " + std::to_string(k + 1) + " has only " + std::to_string(arm.n_survivors) + " survivors");
    const double total = static_cast<double>(res.n_survivors);
    arm.frequency = static_cast<double>(arm.n_survivors) / total;
    arm.frequency_se = std::sqrt(arm.frequency * (1.0 - arm.frequency) / total);
    arm.median_x0 = median(part.x0[k]);
    arm.median_ci = bootstrap_ci(part.x0[k], [](std::vector<double> v) { return median(std::move(v)); }, opt.n_boot,
                                 derive_seed(seed, 1000 + k), 0.95, opt.workers);
    arm.median_exact = median_exact;
    arm.target = std::log(2.0) + std::log(setup.tau * arm.delta);
  }
  return res;
}

/// Root of (1 + z) e^{-z} = 1/2, the median of Gamma(2, 1).
inline double gamma_median_root() {
  double lo = 1.0, hi = 2.0;
  auto g = [](double z) { return (1.0 + z) * std::exp(-z) - 0.5; };
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) > 0.0) lo = mid; else hi = mid;
    if (std::abs(g(mid)) < 1e-15) return mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace born
