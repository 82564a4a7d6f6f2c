// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

// Counts surviving paths of a three-way truncated tree exactly and prints how the
// survivor ratio between two initial amplitudes tracks their ratio.

#include <cstdio>
#include <utility>
#include <vector>

#include "born_branch/exact_tree.hpp"
#include "born_branch/model_core.hpp"

int main() {
  const born::BranchingSpec spec({1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0});
  const auto unit = born::alpha_for_unit_beta(spec);
  const auto sched = born::make_exogenous(1e-6, unit.alpha);
  const std::vector<double> phi = {1.0, 2.0, 4.0};
  const std::vector<std::pair<std::size_t, std::size_t>> pairs = {{1, 0}, {2, 0}};

  std::printf("alpha = %.6f (feasible: %s)\n", unit.alpha, unit.feasible ? "yes" : "no");
  const auto rows = born::born_ratio_scan(spec, sched, 200, phi, pairs);
  std::printf("%6s %12s %12s %10s\n", "t", "N(2)/N(1)", "N(4)/N(1)", "beta_hat");
  for (const auto& r : rows)
    if (r.t % 25 == 0) std::printf("%6lld %12.4f %12.4f %10.4f\n", static_cast<long long>(r.t), r.ratios[0], r.ratios[1], r.beta_hat);
}
