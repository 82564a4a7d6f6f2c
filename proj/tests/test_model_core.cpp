// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "born_branch/model_core.hpp"

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

const BranchingSpec kThird({1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0});

TEST(BranchingSpec, RejectsOffSimplex) {
  EXPECT_EQ(kind_of([] { BranchingSpec({0.5, 0.6}); }), ErrorKind::InvalidSpec);
  EXPECT_EQ(kind_of([] { BranchingSpec({1.0}); }), ErrorKind::InvalidSpec);
  EXPECT_EQ(kind_of([] { BranchingSpec({}); }), ErrorKind::InvalidSpec);
  EXPECT_EQ(kind_of([] { BranchingSpec({0.0, 1.0}); }), ErrorKind::InvalidSpec);
}

TEST(BranchingSpec, NormalizedOnlyWhenAsked) {
  const auto s = BranchingSpec::normalized({1, 2, 3});
  EXPECT_NEAR(s.deltas()[0], 1.0 / 6.0, 1e-15);
}

TEST(BranchingSpec, LogSpaceQuantities) {
  const double lbar = (std::log(1.0 / 6) + std::log(1.0 / 3) + std::log(0.5)) / 3;
  EXPECT_NEAR(kThird.log_delta_bar(), lbar, 1e-15);
  const auto devs = kThird.log_devs();
  EXPECT_NEAR(std::accumulate(devs.begin(), devs.end(), 0.0), 0.0, 1e-14);
  double ss = 0;
  for (double d : devs) ss += d * d;
  EXPECT_NEAR(kThird.sigma(), std::sqrt(ss / 3), 1e-15);
  EXPECT_FALSE(kThird.degenerate());
}

TEST(BranchingSpec, DegenerateHasZeroSigma) {
  const BranchingSpec s({0.5, 0.5});
  EXPECT_TRUE(s.degenerate());
  EXPECT_EQ(s.sigma(), 0.0);
  EXPECT_EQ(kind_of([&] { basic_params(s, 0.4); }), ErrorKind::DegenerateSpec);
}

TEST(ParameterAlgebra, UnitBetaAlphaGivesBetaOne) {
  const auto u = alpha_for_unit_beta(kThird);
  EXPECT_NEAR(u.alpha, 0.372041, 5e-6);
  EXPECT_TRUE(u.feasible);
  EXPECT_NEAR(basic_params(kThird, u.alpha).beta, 1.0, 1e-12);
}

TEST(ParameterAlgebra, InfeasibleSpecFlagged) {
  const auto u = alpha_for_unit_beta(BranchingSpec({0.05, 0.45, 0.5}));
  EXPECT_NEAR(u.alpha, 0.691397, 5e-6);
  EXPECT_FALSE(u.feasible);
}

TEST(ParameterAlgebra, BetaMonotoneInAlpha) {
  double prev = -1e300;
  for (double a = 0.3; a < 0.5; a += 0.01) {
    const double b = basic_params(kThird, a).beta;
    EXPECT_GT(b, prev);
    prev = b;
  }
}

TEST(ParameterAlgebra, WalkShocksStandardized) {
  const auto w = walk_params_from_spec(kThird, 0.372041);
  const auto& v = std::get<FiniteSupportShock>(w.shock_law).values;
  double m = 0, m2 = 0;
  for (double u : v) {
    m += u / 3;
    m2 += u * u / 3;
  }
  EXPECT_NEAR(m, 0.0, 1e-14);
  EXPECT_NEAR(m2, 1.0, 1e-14);
  EXPECT_TRUE(w.positive_step_possible());
}

TEST(MinDelta, BoundAndArity) {
  EXPECT_NEAR(min_delta_bound(), 0.1003676, 1e-7);
  EXPECT_TRUE(min_delta_sufficient_condition(kThird));
  EXPECT_FALSE(min_delta_sufficient_condition(BranchingSpec({0.05, 0.45, 0.5})));
  EXPECT_EQ(kind_of([] { min_delta_sufficient_condition(BranchingSpec({0.5, 0.5})); }), ErrorKind::WrongArity);
}

TEST(Lattice, Diagnostic) {
  EXPECT_EQ(non_lattice_check(kThird), LatticeDiagnostic::LikelyNonLattice);
  EXPECT_EQ(non_lattice_check(BranchingSpec({0.25, 0.25, 0.5})), LatticeDiagnostic::LikelyLattice);
  EXPECT_TRUE(near_rational(0.75, 10));
  EXPECT_FALSE(near_rational(std::sqrt(2.0), 1000));
}

TEST(Schedules, Validation) {
  EXPECT_EQ(kind_of([] { make_exogenous(0.0, 0.5); }), ErrorKind::OutOfRange);
  EXPECT_EQ(kind_of([] { make_exogenous(1e-3, 1.0); }), ErrorKind::OutOfRange);
  EXPECT_EQ(kind_of([] { make_endogenous(1.0); }), ErrorKind::OutOfRange);
  EXPECT_EQ(kind_of([] { barrier_log_epsilon(make_endogenous(0.2)); }), ErrorKind::InvalidSpec);
  EXPECT_NEAR(make_exogenous(1e-3, 0.5).log_xi(4), std::log(1e-3) + 4 * std::log(0.5), 1e-14);
}

TEST(Endogenous, ClosedForms) {
  EXPECT_DOUBLE_EQ(endogenous_beta(0.2), 1.25);
  const auto a = endogenous_alpha(1.0, 1.0, 0.2, 3.0);
  EXPECT_DOUBLE_EQ(a.log_alpha, 0.25);
  EXPECT_DOUBLE_EQ(a.c0, 0.75);
}

TEST(Diffusion, Params) {
  const DiffusionParams p{1.5, 2.0, std::exp(-0.5)};
  EXPECT_NEAR(p.mu(), 1.0, 1e-15);
  EXPECT_NEAR(p.beta(), 0.25, 1e-15);
}

}  // namespace
}  // namespace born
