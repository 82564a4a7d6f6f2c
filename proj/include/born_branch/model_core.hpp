// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <type_traits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "born_branch/error.hpp"
#include "born_branch/rng.hpp"

namespace born {

inline constexpr double kSimplexTolerance = 1e-12;

/// K-way split with fixed ratios delta_k in (0,1) summing to one.
///
/// All derived quantities live in log space: the geometric mean is exp(mean(log delta_k)),
/// never the K-th root of a product, so long horizons cannot underflow.
class BranchingSpec {
 public:
  explicit BranchingSpec(std::vector<double> deltas) : deltas_(std::move(deltas)) {
    require(!deltas_.empty(), ErrorKind::InvalidSpec, "at least one branch is required");
    double sum = 0.0;
    for (double d : deltas_) {
      require(d > 0.0 && d < 1.0, ErrorKind::InvalidSpec, "branching ratios must lie in (0,1)");
      sum += d;
    }
    require(std::abs(sum - 1.0) <= kSimplexTolerance, ErrorKind::InvalidSpec,
            "branching ratios must sum to 1 (got " + std::to_string(sum) + ")");
    log_deltas_.reserve(deltas_.size());
    for (double d : deltas_) log_deltas_.push_back(std::log(d));
    degenerate_ = std::all_of(deltas_.begin(), deltas_.end(), [&](double d) { return d == deltas_.front(); });
    if (degenerate_) {
      log_delta_bar_ = log_deltas_.front();
      log_devs_.assign(deltas_.size(), 0.0);
      sigma_ = 0.0;
      return;
    }
    log_delta_bar_ = std::accumulate(log_deltas_.begin(), log_deltas_.end(), 0.0) / static_cast<double>(size());
    double ss = 0.0;
    for (double l : log_deltas_) {
      log_devs_.push_back(l - log_delta_bar_);
      ss += log_devs_.back() * log_devs_.back();
    }
    sigma_ = std::sqrt(ss / static_cast<double>(size()));
  }

  /// Rescales arbitrary positive weights onto the simplex. Only used on explicit request.
  static BranchingSpec normalized(std::vector<double> weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(sum > 0.0, ErrorKind::InvalidSpec, "weights must have positive sum");
    for (double& w : weights) w /= sum;
    return BranchingSpec(std::move(weights));
  }

  std::size_t size() const noexcept { return deltas_.size(); }
  std::span<const double> deltas() const noexcept { return deltas_; }
  std::span<const double> log_deltas() const noexcept { return log_deltas_; }
  /// log(delta_k / delta_bar); sums to zero.
  std::span<const double> log_devs() const noexcept { return log_devs_; }
  double log_delta_bar() const noexcept { return log_delta_bar_; }
  double delta_bar() const noexcept { return std::exp(log_delta_bar_); }
  double max_delta() const noexcept { return *std::max_element(deltas_.begin(), deltas_.end()); }
  double min_delta() const noexcept { return *std::min_element(deltas_.begin(), deltas_.end()); }
  /// Root mean square of log_devs, i.e. the per-step shock scale of the log process.
  double sigma() const noexcept { return sigma_; }
  bool degenerate() const noexcept { return degenerate_; }

 private:
  std::vector<double> deltas_;
  std::vector<double> log_deltas_;
  std::vector<double> log_devs_;
  double log_delta_bar_ = 0.0;
  double sigma_ = 0.0;
  bool degenerate_ = false;
};

// ---------------------------------------------------------------------------
// Threshold schedules

struct Exogenous {
  double epsilon;
  double alpha;

  double log_xi(std::int64_t t) const noexcept {
    return std::log(epsilon) + static_cast<double>(t) * std::log(alpha);
  }
};

struct Endogenous {
  double varepsilon;
};

/// log E_t = log(epsilon) + V_t with V_t ~ N(0, noise_sd^2), fresh every step.
struct RandomBarrier {
  double epsilon;
  double noise_sd;
};

using ThresholdSchedule = std::variant<Exogenous, Endogenous, RandomBarrier>;

inline Exogenous make_exogenous(double epsilon, double alpha) {
  require(epsilon > 0.0 && std::isfinite(epsilon), ErrorKind::OutOfRange, "epsilon must be positive");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::OutOfRange, "alpha must lie in (0,1)");
  return {epsilon, alpha};
}

inline Endogenous make_endogenous(double varepsilon) {
  require(varepsilon > 0.0 && varepsilon < 1.0, ErrorKind::OutOfRange, "varepsilon must lie in (0,1)");
  return {varepsilon};
}

inline RandomBarrier make_random_barrier(double epsilon, double noise_sd) {
  require(epsilon > 0.0, ErrorKind::OutOfRange, "epsilon must be positive");
  require(noise_sd >= 0.0, ErrorKind::OutOfRange, "noise_sd must be non-negative");
  return {epsilon, noise_sd};
}

/// Mean barrier level log(epsilon) for the schedules that have one.
inline double barrier_log_epsilon(const ThresholdSchedule& s) {
  if (const auto* e = std::get_if<Exogenous>(&s)) return std::log(e->epsilon);
  if (const auto* r = std::get_if<RandomBarrier>(&s)) return std::log(r->epsilon);
  fail(ErrorKind::InvalidSpec, "endogenous schedules have no fixed barrier");
}

// ---------------------------------------------------------------------------
// Walk and diffusion parameters

/// Shocks taking the standardized values `values` with equal probability.
struct FiniteSupportShock {
  std::vector<double> values;
};
/// U = log(V) + 1 with V ~ U(0,1): the standardized log of a uniform multiplier.
struct LogUniformShock {};
struct GaussianShock {};

using ShockLaw = std::variant<FiniteSupportShock, LogUniformShock, GaussianShock>;

inline double draw_shock(const ShockLaw& law, RngStream& rng) {
  return std::visit(
      [&](const auto& l) -> double {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, FiniteSupportShock>) {
          return l.values[rng.below(l.values.size())];
        } else if constexpr (std::is_same_v<L, LogUniformShock>) {
          return std::log(rng.uniform()) + 1.0;
        } else {
          return rng.normal();
        }
      },
      law);
}

/// Upper end of the shock support (infinite for the Gaussian).
inline double shock_sup(const ShockLaw& law) {
  if (const auto* f = std::get_if<FiniteSupportShock>(&law))
    return *std::max_element(f->values.begin(), f->values.end());
  if (std::holds_alternative<LogUniformShock>(law)) return 1.0;
  return INFINITY;
}

struct WalkParams {
  double mu;
  double sigma;
  ShockLaw shock_law;

  double beta() const noexcept { return mu / (sigma * sigma); }
  /// P(U > mu/sigma) > 0, i.e. the walk can move away from the barrier.
  bool positive_step_possible() const { return shock_sup(shock_law) > mu / sigma; }
};

inline WalkParams make_walk_params(double mu, double sigma, ShockLaw law) {
  require(mu > 0.0, ErrorKind::OutOfRange, "walk drift mu must be positive");
  require(sigma > 0.0, ErrorKind::OutOfRange, "walk scale sigma must be positive");
  if (auto* f = std::get_if<FiniteSupportShock>(&law))
    require(!f->values.empty(), ErrorKind::InvalidSpec, "finite-support shock needs values");
  return {mu, sigma, std::move(law)};
}

struct DiffusionParams {
  double tilde_mu;
  double sigma;
  double alpha = 1.0;

  double mu() const noexcept { return std::log(alpha) + tilde_mu; }
  double beta() const noexcept { return mu() / (sigma * sigma); }

  /// Parameters for a rescaled process with drift -mu and no threshold decay.
  static DiffusionParams from_drift(double mu, double sigma) { return {mu, sigma, 1.0}; }
};

// ---------------------------------------------------------------------------
// Parameter algebra

struct AlphaForUnitBeta {
  double alpha;
  bool feasible;
};

/// Threshold decay that makes beta = 1: alpha = delta_bar * exp(sigma^2).
inline AlphaForUnitBeta alpha_for_unit_beta(const BranchingSpec& spec) {
  const double s = spec.sigma();
  const double alpha = std::exp(spec.log_delta_bar() + s * s);
  const bool feasible = s > 0.0 && alpha > spec.delta_bar() && alpha < spec.max_delta();
  return {alpha, feasible};
}

struct BasicParams {
  double mu;
  double sigma;
  double beta;
};

inline BasicParams basic_params(const BranchingSpec& spec, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::OutOfRange, "alpha must lie in (0,1)");
  require(!spec.degenerate() && spec.sigma() > 0.0, ErrorKind::DegenerateSpec,
          "identical branching ratios give sigma = 0");
  const double mu = std::log(alpha) - spec.log_delta_bar();
  const double s = spec.sigma();
  return {mu, s, mu / (s * s)};
}

/// Finite-support walk for the basic model: U_k = log(delta_k/delta_bar)/sigma.
inline WalkParams walk_params_from_spec(const BranchingSpec& spec, double alpha) {
  const auto p = basic_params(spec, alpha);
  FiniteSupportShock law;
  for (double d : spec.log_devs()) law.values.push_back(d / p.sigma);
  return make_walk_params(p.mu, p.sigma, std::move(law));
}

/// (1 + 2 e^{3/2})^{-1}; a K = 3 spec with every ratio above it admits beta = 1.
inline double min_delta_bound() { return 1.0 / (1.0 + 2.0 * std::exp(1.5)); }

inline bool min_delta_sufficient_condition(const BranchingSpec& spec) {
  require(spec.size() == 3, ErrorKind::WrongArity, "the min-delta condition is stated for K = 3");
  return spec.min_delta() > min_delta_bound();
}

enum class LatticeDiagnostic { LikelyLattice, LikelyNonLattice };

/// True when x is within `tol` of p/q for some q <= max_denominator (continued fractions).
inline bool near_rational(double x, std::int64_t max_denominator, double tol = 1e-12) {
  if (!std::isfinite(x)) return false;
  // Convergents h/k of the continued fraction of x.
  long double h_prev = 1, h = std::floor(static_cast<long double>(x));
  long double k_prev = 0, k = 1;
  long double rem = static_cast<long double>(x) - h;
  for (int iter = 0; iter < 64; ++iter) {
    if (std::abs(static_cast<long double>(x) - h / k) <= tol) return true;
    if (rem < 1e-18L) return false;
    const long double inv = 1.0L / rem;
    const long double a = std::floor(inv);
    rem = inv - a;
    const long double h_next = a * h + h_prev, k_next = a * k + k_prev;
    if (k_next > static_cast<long double>(max_denominator)) return false;
    h_prev = h;
    h = h_next;
    k_prev = k;
    k = k_next;
  }
  return false;
}

/// Advisory non-lattice diagnostic over all index triples.
///
/// Exact irrationality cannot be decided in floating point; this only reports whether some
/// ratio log(d_k/d_j)/log(d_l/d_j) escapes every rational with a bounded denominator.
inline LatticeDiagnostic non_lattice_check(const BranchingSpec& spec, std::int64_t max_denominator = 1'000'000) {
  const auto logs = spec.log_deltas();
  const std::size_t K = logs.size();
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t l = 0; l < K; ++l) {
      const double den = logs[l] - logs[j];
      if (den == 0.0) continue;
      for (std::size_t k = 0; k < K; ++k) {
        const double r = (logs[k] - logs[j]) / den;
        if (!near_rational(r, max_denominator)) return LatticeDiagnostic::LikelyNonLattice;
      }
    }
  }
  return LatticeDiagnostic::LikelyLattice;
}

/// Power-law exponent under the endogenous threshold: 1/(1 - varepsilon).
inline double endogenous_beta(double varepsilon) {
  require(varepsilon > 0.0 && varepsilon < 1.0, ErrorKind::OutOfRange, "varepsilon must lie in (0,1)");
  return 1.0 / (1.0 - varepsilon);
}

struct EndogenousAlpha {
  double log_alpha;
  double c0;
};

/// Growth rate and intercept of the self-consistent threshold xi ~ c0 * alpha^tau.
inline EndogenousAlpha endogenous_alpha(double tilde_mu, double sigma, double varepsilon, double phi0 = 1.0) {
  require(sigma > 0.0, ErrorKind::OutOfRange, "sigma must be positive");
  require(varepsilon > 0.0 && varepsilon < 1.0, ErrorKind::OutOfRange, "varepsilon must lie in (0,1)");
  return {sigma * sigma / (1.0 - varepsilon) - tilde_mu, phi0 * varepsilon / (1.0 - varepsilon)};
}

}  // namespace born
