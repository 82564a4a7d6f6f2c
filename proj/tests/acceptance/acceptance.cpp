// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

// One line per criterion: "criterion N: PASS|FAIL; details". Exit status is 0 only if
// every selected criterion passes. `--criterion N` runs a single one.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "born_branch/analytics.hpp"
#include "born_branch/diffusion.hpp"
#include "born_branch/exact_tree.hpp"
#include "born_branch/first_passage.hpp"
#include "born_branch/model_core.hpp"
#include "born_branch/walk_mc.hpp"

namespace {

using namespace born;

struct Verdict {
  bool pass;
  std::string details;
};

std::string f(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

unsigned workers() { return default_workers(); }

bool within_budget(double seconds, double budget, std::ostringstream& d) {
  d << "; runtime " << f(seconds, 3) << " s (budget " << f(budget, 3) << " s)";
  return seconds < budget;
}

template <class Fn>
double timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict criterion1() {
  std::uint64_t mismatches = 0, specs = 0;
  const double secs = timed([&] {
    for (std::uint64_t i = 0; i < 50; ++i) {
      auto rng = rng_stream(0xacce55ULL, i);
      const std::size_t K = 2 + static_cast<std::size_t>(i % 3);
      std::vector<double> w(K);
      for (auto& x : w) x = 0.05 + rng.uniform();
      const auto spec = BranchingSpec::normalized(w);
      const auto sched = make_exogenous(std::exp(-6.0 * rng.uniform()), 0.1 + 0.8 * rng.uniform());
      const std::int64_t t = 12;
      const auto dp = count_survivors_dp_single(spec, sched, t, 1.0);
      const auto brute = enumerate_brute(spec, sched, t, 1.0);
      for (std::int64_t s = 0; s <= t; ++s)
        mismatches += dp[s] != mpz_class(static_cast<unsigned long>(brute.per_depth[s]));
      ++specs;
    }
  });
  std::ostringstream d;
  d << specs << " random specs, K in {2,3,4}, t = 12, " << mismatches << " mismatching depth counts";
  const bool budget = within_budget(secs, 60, d);
  return {mismatches == 0 && budget, d.str()};
}

Verdict criterion2() {
  const BranchingSpec spec({1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0});
  const auto sched = make_exogenous(1e-6, 0.372041);
  const std::vector<double> grid = {1, 2, 4, 8, 16};
  const std::vector<std::pair<std::size_t, std::size_t>> pairs = {{2, 0}};
  std::vector<BornRatioRow> rows;
  const double secs = timed([&] { rows = born_ratio_scan(spec, sched, 1000, grid, pairs, workers()); });
  double bmin = INFINITY, bmax = -INFINITY, rmin = INFINITY, rmax = -INFINITY;
  for (const auto& r : rows) {
    if (r.t < 400) continue;
    bmin = std::min(bmin, r.beta_hat);
    bmax = std::max(bmax, r.beta_hat);
    rmin = std::min(rmin, r.ratios[0]);
    rmax = std::max(rmax, r.ratios[0]);
  }
  std::ostringstream d;
  d << "t in [400,1000]: beta_hat in [" << f(bmin, 4) << ", " << f(bmax, 4) << "] (need [0.85, 1.15]); N(4)/N(1) in ["
    << f(rmin, 4) << ", " << f(rmax, 4) << "] (need [3.4, 4.6])";
  const bool budget = within_budget(secs, 180, d);
  return {bmin >= 0.85 && bmax <= 1.15 && rmin >= 3.4 && rmax <= 4.6 && budget, d.str()};
}

Verdict criterion3() {
  const BranchingSpec spec({0.05, 0.45, 0.5});
  const double alpha = 0.691397;
  const auto unit = alpha_for_unit_beta(spec);
  const bool flagged = !unit.feasible && alpha > spec.max_delta();
  std::vector<mpz_class> series;
  const double secs = timed([&] { series = count_survivors_dp_single(spec, make_exogenous(1e-6, alpha), 2000, 1.0); });
  std::int64_t extinct = -1;
  for (std::size_t t = 0; t < series.size(); ++t)
    if (series[t] == 0) {
      extinct = static_cast<std::int64_t>(t);
      break;
    }
  std::ostringstream d;
  d << "unit-beta alpha " << f(unit.alpha) << " > max delta " << f(spec.max_delta()) << ": "
    << (flagged ? "flagged infeasible" : "not flagged") << "; ";
  if (extinct >= 0)
    d << "all paths extinct at t = " << extinct;
  else
    d << "survivors remain at t = 2000";
  const bool budget = within_budget(secs, 120, d);
  return {flagged && extinct >= 0 && extinct <= 2000 && budget, d.str()};
}

Verdict criterion4() {
  const auto p = DiffusionParams::from_drift(1.0, 1.0);
  const double eps = std::exp(-18.4);
  double rel = 0, erel = 0;
  const double secs = timed([&] {
    const std::vector<double> tau = {500};
    const auto r = theorem3_ratio_check(p, 2.0, 0.0, eps, tau);
    rel = r[0].ratio / r[0].target - 1.0;
    const std::vector<double> starts = {0, 1, 2, 3};
    erel = closed_form_exponent(p, starts, eps, 1000).slope / p.beta() - 1.0;
  });
  std::ostringstream d;
  d << "ratio/e^2 - 1 = " << f(rel, 4) << " at tau=500 (need |.| <= 0.02); exponent/beta - 1 = " << f(erel, 4)
    << " at tau=1000 (need |.| <= 0.005)";
  const bool budget = within_budget(secs, 1, d);
  return {std::abs(rel) <= 0.02 && std::abs(erel) <= 0.005 && budget, d.str()};
}

Verdict criterion5() {
  double z_max = 0;
  std::ostringstream cells;
  const double secs = timed([&] {
    std::uint64_t cell = 0;
    for (double dd : {2.0, 3.0, 5.0})
      for (double tau : {5.0, 10.0, 20.0}) {
        const std::uint64_t n = 100000;
        const auto r = run_diffusion_paths(1.0, 1.0, dd, tau, default_dt(1.0, 1.0), n, derive_seed(5, cell++), workers());
        const double q = survival_closed_form(1.0, 1.0, dd, tau);
        const double z = std::abs(r.estimate.p_hat - q) / std::sqrt(q * (1 - q) / n);
        z_max = std::max(z_max, z);
      }
  });
  std::ostringstream d;
  d << "3x3 grid d in {2,3,5}, tau in {5,10,20}, 1e5 paths each: max |z| = " << f(z_max, 3) << " (need < 3)";
  const bool budget = within_budget(secs, 120, d);
  return {z_max < 3 && budget, d.str()};
}

Verdict criterion6() {
  const auto p = DiffusionParams::from_drift(1.0, 1.0);
  ConditionedSample s;
  const double secs = timed([&] { s = conditioned_sample(p, 3.0, 1.0, 10.0, 2000000, 6, 0.0, workers()); });
  std::ostringstream d;
  d << s.sample.size() << " survivors; KS vs shifted exponential = " << f(s.ks_best_fit_shifted, 4)
    << " (need < 0.02); memoryless probe " << (s.memoryless_pass ? "pass" : "fail") << "; fitted rate "
    << f(s.fitted_rate, 4) << " vs mu/sigma^2 = " << f(s.rate_mu, 3) << " (KS " << f(s.ks_rate_mu, 3)
    << "), 2mu/sigma^2 = " << f(s.rate_2mu, 3) << " (KS " << f(s.ks_rate_2mu, 3) << "); Gamma(2) KS "
    << f(s.ks_gamma2, 3);
  const bool budget = within_budget(secs, 180, d);
  return {s.sample.size() >= 10000 && s.ks_best_fit_shifted < 0.02 && s.memoryless_pass && budget, d.str()};
}

Verdict criterion7() {
  std::vector<ConditionalMeanResult> res;
  const double secs = timed([&] {
    std::uint64_t i = 0;
    for (double beta : {1.25, 2.0}) {
      const auto p = DiffusionParams::from_drift(beta, 1.0);
      res.push_back(conditional_mean_ratio(p, 1.0, 1.0, 50.0, 20000, derive_seed(7, i++),
                                           ConditionalMeanMethod::FlemingViot, 0.0, workers()));
    }
  });
  std::ostringstream d;
  bool ok = true;
  const char* names[] = {"beta=1.25", "beta=2"};
  for (std::size_t i = 0; i < res.size(); ++i) {
    const double rel = res[i].estimate / res[i].target - 1.0;
    ok = ok && std::abs(rel) <= 0.10;
    d << (i ? "; " : "") << names[i] << ": " << f(res[i].estimate, 4) << " +- " << f(res[i].se, 3) << " vs "
      << f(res[i].target, 3) << " (rel " << f(rel, 3) << ", need |.| <= 0.1)";
  }
  const bool budget = within_budget(secs, 120, d);
  return {ok && budget, d.str()};
}

Verdict criterion8() {
  PopulationOptions opt;
  opt.record_every = 10;
  opt.workers = workers();
  PopulationResult a, b;
  const double secs = timed([&] {
    a = endogenous_population(1.0, 1.0, 0.2, 100000, 100.0, 0.01, 1.0, 8, opt);
    b = endogenous_population(1.0, 1.0, 0.2, 100000, 100.0, 0.01, 100.0, 8, opt);
  });
  const double change = std::abs(a.fit.slope - b.fit.slope);
  std::ostringstream d;
  d << "log xi slope " << f(a.fit.slope, 4) << " +- " << f(a.fit.stderr_slope, 2) << " vs " << f(a.theory_log_alpha, 3)
    << " (need within 0.03); phi0 x100 slope change " << f(change, 3) << " (need < 0.005)";
  const bool budget = within_budget(secs, 300, d);
  return {std::abs(a.fit.slope - a.theory_log_alpha) <= 0.03 && change < 0.005 && budget, d.str()};
}

const std::vector<double> kOutcomes = {0.2, 0.3, 0.5};

MeasurementOptions measure_opts() {
  MeasurementOptions o;
  o.workers = workers();
  return o;
}

Verdict criterion9() {
  MeasurementResult r;
  const double secs = timed(
      [&] { r = measurement_pipeline(make_measurement_setup(kOutcomes, 0.1, 1e-8, 200), 1000000, 9, measure_opts()); });
  std::ostringstream d;
  d << r.n_survivors << " survivors (need >= 30000); frequencies";
  bool ok = r.n_survivors >= 30000;
  for (const auto& a : r.arms) {
    const double z = std::abs(a.frequency - a.delta) / a.frequency_se;
    ok = ok && z <= 3;
    d << " " << f(a.frequency, 4) << " (z " << f(z, 2) << ")";
  }
  d << " vs (0.2, 0.3, 0.5), need z <= 3";
  const bool budget = within_budget(secs, 240, d);
  return {ok && budget, d.str()};
}

Verdict criterion10() {
  std::vector<double> xs, ys;
  double median500 = 0, target500 = 0, exact = 0;
  Interval ci{0, 0};
  const double secs = timed([&] {
    std::uint64_t i = 0;
    for (double tau : {250.0, 500.0, 1000.0}) {
      const auto r = measurement_pipeline(make_measurement_setup(kOutcomes, 0.1, 1e-8, tau), 1000000,
                                          derive_seed(10, i++), measure_opts());
      xs.push_back(std::log(tau * 0.2));
      ys.push_back(r.arms[0].median_x0);
      if (tau == 500.0) {
        median500 = r.arms[0].median_x0;
        target500 = r.arms[0].target;
        ci = r.arms[0].median_ci;
        exact = r.arms[0].median_exact;
      }
    }
  });
  const double slope = fit_power_law(xs, ys).slope;
  std::ostringstream d;
  d << "delta=0.2, tau=500: median X0 - log eps = " << f(median500, 4) << " [" << f(ci.lo, 4) << ", " << f(ci.hi, 4)
    << "], conditioned-law median " << f(exact, 4) << ", target log 2 + log 100 = " << f(target500, 4)
    << " (need within 0.25); slope over tau in {250,500,1000} = " << f(slope, 3) << " (need 1 +- 0.1)";
  const bool budget = within_budget(secs, 300, d);
  return {std::abs(median500 - target500) <= 0.25 && std::abs(slope - 1.0) <= 0.1 && budget, d.str()};
}

Verdict criterion11() {
  IntervalLogProb lp{};
  CountFraction frac{};
  bool below = false;
  const double secs = timed([&] {
    lp = binomial_interval_logprob(1000, 0.2, 100, 300);
    frac = binomial_count_fraction(1000, 100, 300);
    below = fraction_less_than_pow10(frac, -37);
  });
  const double outside = std::exp(lp.log_outside);
  const double rel = outside / 2.2e-14 - 1.0;
  std::ostringstream d;
  d << "P(outside [100,300]) = " << f(outside, 4) << " (rel " << f(rel, 3) << " vs 2.2e-14, need |.| <= 0.2); count fraction 10^"
    << f(frac.log10_value, 5) << ", exactly below 1e-37: " << (below ? "yes" : "no");
  const bool budget = within_budget(secs, 5, d);
  return {std::abs(rel) <= 0.2 && below && budget, d.str()};
}

Verdict criterion12() {
  const auto spec = make_lcg_spec(2305843009213693951ULL, 6364136223846793005ULL, 1);
  double ks = 0, m = 0, v = 0;
  BetaFit fit;
  const double secs = timed([&] {
    const auto deltas = lcg_sample_deltas(spec, 1000000, 1000000, 12);
    std::vector<double> logs;
    for (double x : deltas) logs.push_back(std::log(x));
    ks = ks_distance_unsorted(deltas, [](double x) { return std::clamp(x, 0.0, 1.0); });
    m = -mean(logs);
    v = variance(logs);
    const double mu = -11.0 / 12.0 + m;
    const auto wp = make_walk_params(mu, std::sqrt(v), LogUniformShock{});
    EstimateOptions eo;
    eo.workers = workers();
    const std::vector<double> starts = {0, 1, 2, 3};
    fit = fit_walk_beta(wp, starts, make_exogenous(1e-3, 0.5), 200, 200000, derive_seed(12, 1), eo);
  });
  const bool ks_ok = ks < 0.002, m_ok = std::abs(m - 1.0) <= 0.01;
  const bool v_ok = std::abs(v / (1.0 / 12.0) - 1.0) <= 0.02;
  const bool b_ok = fit.fit.slope >= 0.85 && fit.fit.slope <= 1.15;
  std::ostringstream d;
  d << "KS vs U[0,1] = " << f(ks, 3) << " (need < 0.002); mean(-log delta) = " << f(m, 5)
    << " (need 1 +- 0.01); var(log delta) = " << f(v, 5) << " (need 1/12 +- 2%); walk beta_hat = " << f(fit.fit.slope, 4)
    << " +- " << f(fit.fit.stderr_slope, 2) << " (need [0.85, 1.15])";
  const bool budget = within_budget(secs, 180, d);
  return {ks_ok && m_ok && v_ok && b_ok && budget, d.str()};
}

Verdict criterion13() {
  const auto wp = make_walk_params(1.0, 1.0, GaussianShock{});
  const double eps = 1e-8;
  SurvivalRatio fixed, noisy;
  EstimateOptions eo;
  eo.workers = workers();
  const double secs = timed([&] {
    fixed = survival_ratio(wp, 1.0, 0.0, make_exogenous(eps, 0.5), 25, 1000000, derive_seed(13, 0), eo);
    noisy = survival_ratio(wp, 1.0, 0.0, make_random_barrier(eps, 0.5), 25, 1000000, derive_seed(13, 1), eo);
  });
  const double z = std::abs(noisy.ratio - fixed.ratio) / std::hypot(noisy.se, fixed.se);
  std::ostringstream d;
  d << "ratio p(1)/p(0): fixed " << f(fixed.ratio, 5) << " +- " << f(fixed.se, 2) << ", noise_sd=0.5 " << f(noisy.ratio, 5)
    << " +- " << f(noisy.se, 2) << ", |z| = " << f(z, 3) << " (need <= 3)";
  const bool budget = within_budget(secs, 120, d);
  return {z <= 3 && budget, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria = {criterion1, criterion2,  criterion3,  criterion4, criterion5,
                                                          criterion6, criterion7,  criterion8,  criterion9, criterion10,
                                                          criterion11, criterion12, criterion13};
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "unknown criterion %d\n", only);
    return 1;
  }
  bool all = true;
  for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) {
    if (only && n != only) continue;
    Verdict v;
    try {
      v = criteria[n - 1]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d: %s; %s\n", n, v.pass ? "PASS" : "FAIL", v.details.c_str());
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
