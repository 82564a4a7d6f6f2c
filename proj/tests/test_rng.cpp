// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "born_branch/analytics.hpp"
#include "born_branch/parallel.hpp"
#include "born_branch/rng.hpp"

namespace born {
namespace {

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(Philox4x32::apply({0, 0, 0, 0}, {0, 0}),
            (Philox4x32::Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(Philox4x32::apply({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (Philox4x32::Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(Philox4x32::apply({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (Philox4x32::Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, SameSeedAndIdReplays) {
  auto a = rng_stream(42, 7), b = rng_stream(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(RngStream, DistinctIdsDiffer) {
  auto a = rng_stream(42, 1), b = rng_stream(42, 2);
  int same = 0;
  for (int i = 0; i < 1000; ++i) same += a() == b();
  EXPECT_EQ(same, 0);
}

TEST(RngStream, SeekMatchesSequentialDraws) {
  auto a = rng_stream(9, 3);
  std::vector<std::uint64_t> seq(20);
  for (auto& x : seq) x = a();
  auto b = rng_stream(9, 3);
  b.seek(5);
  EXPECT_EQ(b(), seq[10]);
}

TEST(RngStream, CrossCorrelationSmall) {
  auto a = rng_stream(2026, 1), b = rng_stream(2026, 2);
  const int n = 1'000'000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += (a.uniform() - 0.5) * (b.uniform() - 0.5) * 12.0;
  EXPECT_LT(std::abs(s / n), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(RngStream, UniformsPassKs) {
  auto r = rng_stream(11, 0);
  std::vector<double> u(1'000'000);
  for (auto& x : u) x = r.uniform();
  EXPECT_LT(ks_distance_unsorted(u, [](double x) { return x; }), 1.63e-3);
  EXPECT_GT(*std::min_element(u.begin(), u.end()), 0.0);
  EXPECT_LT(*std::max_element(u.begin(), u.end()), 1.0);
}

TEST(RngStream, NormalMoments) {
  auto r = rng_stream(5, 5);
  const int n = 400'000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(RngStream, BelowIsUnbiased) {
  auto r = rng_stream(8, 8);
  std::vector<int> hist(3);
  for (int i = 0; i < 300'000; ++i) ++hist[r.below(3)];
  for (int h : hist) EXPECT_NEAR(h, 100'000, 5 * std::sqrt(100'000 * 2.0 / 3.0));
}

TEST(DeriveSeed, TagsSeparate) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(3, 4), derive_seed(3, 4));
}

TEST(BlockReduce, IndependentOfWorkerCount) {
  const auto run = [](unsigned w) {
    return block_reduce<double>(
        100'000, w, 0.0,
        [](std::size_t b, std::size_t e) {
          double s = 0;
          for (std::size_t i = b; i < e; ++i) s += rng_stream(1, i).uniform();
          return s;
        },
        [](double& acc, double v) { acc += v; }, 1000);
  };
  const double one = run(1);
  EXPECT_EQ(one, run(2));
  EXPECT_EQ(one, run(7));
}

}  // namespace
}  // namespace born
