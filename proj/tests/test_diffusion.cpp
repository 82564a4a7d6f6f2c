// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "born_branch/diffusion.hpp"
#include "born_branch/first_passage.hpp"

namespace born {
namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::InvalidSpec;
}

TEST(ClosedForm, ReferenceValue) {
  EXPECT_NEAR(survival_closed_form(1, 1, 2, 1), 0.76764, 5e-5);
}

TEST(ClosedForm, DriftlessLimitIsReflection) {
  for (double d : {0.5, 1.0, 3.0})
    EXPECT_NEAR(survival_closed_form(1e-10, 1.3, d, 2.0), survival_reflection(1.3, d, 2.0), 1e-8);
}

TEST(ClosedForm, MonotoneInTauAndDistance) {
  double prev = 1.0;
  for (double tau = 0.5; tau < 200; tau *= 1.5) {
    const double q = survival_closed_form(0.7, 1.1, 2.0, tau);
    EXPECT_LT(q, prev);
    prev = q;
  }
  EXPECT_LT(survival_closed_form(1, 1, 2, 10), survival_closed_form(1, 1, 3, 10));
}

TEST(ClosedForm, DeepTailMatchesAsymptote) {
  for (double tau : {2000.0, 10000.0}) {
    const double lc = log_survival_closed_form(1.0, 1.0, 3.0, tau);
    EXPECT_TRUE(std::isfinite(lc));
    EXPECT_NEAR(lc - log_survival_asymptotic(1.0, 1.0, 3.0, tau), 0.0, 30.0 / tau);
  }
}

TEST(ClosedForm, DomainErrors) {
  EXPECT_EQ(kind_of([] { survival_closed_form(1, 1, 0.0, 1); }), ErrorKind::DomainError);
  EXPECT_EQ(kind_of([] { survival_closed_form(1, 0.0, 1, 1); }), ErrorKind::DomainError);
  EXPECT_EQ(kind_of([] { survival_asymptotic(-1, 1, 1, 1); }), ErrorKind::DomainError);
}

TEST(ClosedForm, SiegmundConstant) {
  // -zeta(1/2) / sqrt(2 pi)
  EXPECT_NEAR(kSiegmundShift, 1.4603545088095868 / std::sqrt(2 * std::numbers::pi), 1e-15);
}

TEST(Bridge, MatchesClosedForm) {
  const auto r = run_diffusion_paths(1.0, 1.0, 2.0, 1.0, 0.01, 100000, 5);
  const double q = survival_closed_form(1, 1, 2, 1);
  EXPECT_LT(std::abs(r.estimate.p_hat - q), 4 * std::sqrt(q * (1 - q) / 100000));
}

TEST(Bridge, UncorrectedEulerOverstatesSurvival) {
  const auto with = run_diffusion_paths(1.0, 1.0, 1.0, 2.0, 0.05, 100000, 5, 1, true);
  const auto without = run_diffusion_paths(1.0, 1.0, 1.0, 2.0, 0.05, 100000, 5, 1, false);
  EXPECT_GT(without.estimate.p_hat, with.estimate.p_hat + 0.01);
}

TEST(Bridge, DeterministicAcrossWorkers) {
  const auto a = run_diffusion_paths(1.0, 1.0, 2.0, 3.0, 0.01, 30000, 8, 1, true, true);
  const auto b = run_diffusion_paths(1.0, 1.0, 2.0, 3.0, 0.01, 30000, 8, 3, true, true);
  EXPECT_EQ(a.estimate.n_survivors, b.estimate.n_survivors);
  EXPECT_EQ(a.endpoints, b.endpoints);
}

TEST(Ratio, ApproachesPowerLaw) {
  const auto p = DiffusionParams::from_drift(1.0, 1.0);
  const std::vector<double> taus = {10, 100, 1000};
  const auto rows = theorem3_ratio_check(p, 2.0, 0.0, std::exp(-18.4), taus);
  EXPECT_GT(std::abs(rows[0].ratio / rows[0].target - 1), std::abs(rows[2].ratio / rows[2].target - 1));
}

TEST(Conditioned, BudgetPrecheck) {
  const auto p = DiffusionParams::from_drift(1.0, 1.0);
  EXPECT_EQ(kind_of([&] { conditioned_sample(p, 3.0 + std::log(1e-3), 1e-3, 50.0, 1000, 1); }),
            ErrorKind::TooFewSurvivors);
}

TEST(Conditioned, SampleLooksExponential) {
  const auto p = DiffusionParams::from_drift(1.0, 1.0);
  const auto s = conditioned_sample(p, 2.0, 1.0, 5.0, 200000, 3, 0.01);
  EXPECT_GT(s.sample.size(), 1000u);
  EXPECT_TRUE(std::is_sorted(s.sample.begin(), s.sample.end()));
  EXPECT_GT(s.sample.front(), 0.0);
  EXPECT_EQ(s.memoryless.size(), 3u);
}

TEST(ConditionalMean, DivergentRegime) {
  const auto p = DiffusionParams::from_drift(0.5, 1.0);
  EXPECT_EQ(kind_of([&] { conditional_mean_ratio(p, 1.0, 1.0, 10, 1000, 1, ConditionalMeanMethod::Paths); }),
            ErrorKind::DivergentRegime);
}

TEST(ConditionalMean, FlemingViotDeterministicAcrossWorkers) {
  const auto a = fleming_viot_fixed_barrier(2.0, 1.0, 1.0, 2.0, 0.01, 6000, 4, nullptr, 1);
  const auto b = fleming_viot_fixed_barrier(2.0, 1.0, 1.0, 2.0, 0.01, 6000, 4, nullptr, 2);
  EXPECT_EQ(a, b);
}

TEST(Endogenous, ScaleInvariantAndDeterministic) {
  PopulationOptions opt;
  opt.record_every = 10;
  const auto a = endogenous_population(1.0, 1.0, 0.2, 2000, 5.0, 0.01, 1.0, 9, opt);
  const auto b = endogenous_population(1.0, 1.0, 0.2, 2000, 5.0, 0.01, 100.0, 9, opt);
  opt.workers = 3;
  const auto c = endogenous_population(1.0, 1.0, 0.2, 2000, 5.0, 0.01, 1.0, 9, opt);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  EXPECT_EQ(a.survivor_ids, b.survivor_ids);
  EXPECT_EQ(a.survivor_ids, c.survivor_ids);
  for (std::size_t i = 0; i < a.trajectory.size(); ++i)
    EXPECT_NEAR(b.trajectory[i].log_xi - a.trajectory[i].log_xi, std::log(100.0), 1e-9);
  EXPECT_NEAR(b.fit.slope, a.fit.slope, 1e-9);
  EXPECT_DOUBLE_EQ(a.theory_log_alpha, 0.25);
}

TEST(Endogenous, ThresholdRemovesParticlesBelowIt) {
  PopulationOptions opt;
  opt.clone = false;
  const auto r = endogenous_population(1.0, 1.0, 0.2, 1000, 0.05, 0.01, 1.0, 2, opt);
  for (std::size_t i = 1; i < r.trajectory.size(); ++i)
    EXPECT_LE(r.trajectory[i].n_survivors, r.trajectory[i - 1].n_survivors);
}

TEST(Measurement, Validation) {
  EXPECT_EQ(kind_of([] { make_measurement_setup({0.5, 0.6}, 0.1, 1e-8, 200); }), ErrorKind::InvalidSpec);
  const auto s = make_measurement_setup({0.2, 0.3, 0.5}, 0.1, 1e-8, 50);
  EXPECT_EQ(kind_of([&] { measurement_pipeline(s, 1000, 1); }), ErrorKind::DomainError);
}

TEST(Measurement, BayesWeightsAndMedianOracle) {
  const auto s = make_measurement_setup({0.2, 0.3, 0.5}, 0.1, 1e-8, 200);
  MeasurementOptions opt;
  opt.n_boot = 20;
  const auto r = measurement_pipeline(s, 200000, 4, opt);
  for (const auto& a : r.arms) {
    EXPECT_NEAR(a.bayes_weight, a.delta, 1e-3);
    EXPECT_LT(a.median_ci.lo, a.median_ci.hi);
    EXPECT_LT(std::abs(a.frequency - a.delta), 4 * a.frequency_se);
    EXPECT_NEAR(a.median_x0, a.median_exact, 0.25);
  }
}

TEST(Gamma, MedianRoot) {
  const double z = gamma_median_root();
  EXPECT_NEAR((1 + z) * std::exp(-z), 0.5, 1e-14);
  EXPECT_NEAR(z, 1.67834699, 1e-7);
}

}  // namespace
}  // namespace born
