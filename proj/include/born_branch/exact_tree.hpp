// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <gmp.h>
#include <gmpxx.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "born_branch/analytics.hpp"
#include "born_branch/error.hpp"
#include "born_branch/model_core.hpp"
#include "born_branch/parallel.hpp"
#include "born_branch/rng.hpp"

namespace born {

inline constexpr double kTieGuard = 1e-9;
inline constexpr double kBruteForceLimit = 1e8;

/// log10 of a positive big integer; -inf for zero.
inline double log10_mpz(const mpz_class& x) {
  if (x == 0) return -INFINITY;
  long e = 0;
  const double m = mpz_get_d_2exp(&e, x.get_mpz_t());
  return std::log10(m) + static_cast<double>(e) * std::log10(2.0);
}

inline long double log_mpz(const mpz_class& x) {
  if (x == 0) return -INFINITY;
  long e = 0;
  const double m = mpz_get_d_2exp(&e, x.get_mpz_t());
  return std::log(static_cast<long double>(m)) + static_cast<long double>(e) * std::numbers::ln2_v<long double>;
}

namespace detail {

struct Dyadic {
  mpz_class mant;
  long exp2;
};

inline Dyadic to_dyadic(double x) {
  int e = 0;
  const double f = std::frexp(x, &e);
  Dyadic d;
  d.mant = mpz_class(std::ldexp(f, 53));
  d.exp2 = e - 53;
  return d;
}

/// Exact test phi0 * prod delta_k^{n_k} >= epsilon * alpha^t, treating every double as the
/// dyadic rational it encodes.
inline bool exact_survives(double phi0, std::span<const double> deltas, std::span<const std::uint32_t> counts,
                           double epsilon, double alpha, std::int64_t t) {
  Dyadic lhs = to_dyadic(phi0);
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (counts[k] == 0) continue;
    const Dyadic d = to_dyadic(deltas[k]);
    mpz_class p;
    mpz_pow_ui(p.get_mpz_t(), d.mant.get_mpz_t(), counts[k]);
    lhs.mant *= p;
    lhs.exp2 += d.exp2 * static_cast<long>(counts[k]);
  }
  Dyadic rhs = to_dyadic(epsilon);
  const Dyadic a = to_dyadic(alpha);
  mpz_class p;
  mpz_pow_ui(p.get_mpz_t(), a.mant.get_mpz_t(), static_cast<unsigned long>(t));
  rhs.mant *= p;
  rhs.exp2 += a.exp2 * static_cast<long>(t);
  if (lhs.exp2 >= rhs.exp2) {
    mpz_class l = lhs.mant;
    mpz_mul_2exp(l.get_mpz_t(), l.get_mpz_t(), static_cast<mp_bitcnt_t>(lhs.exp2 - rhs.exp2));
    return l >= rhs.mant;
  }
  mpz_class r = rhs.mant;
  mpz_mul_2exp(r.get_mpz_t(), r.get_mpz_t(), static_cast<mp_bitcnt_t>(rhs.exp2 - lhs.exp2));
  return lhs.mant >= r;
}

}  // namespace detail

/// Survival test for a branch-count vector at period t, bit-stable at the threshold.
class SurvivalRule {
 public:
  SurvivalRule(const BranchingSpec& spec, const Exogenous& sched, double phi0)
      : deltas_(spec.deltas().begin(), spec.deltas().end()),
        log_deltas_(spec.log_deltas().begin(), spec.log_deltas().end()),
        epsilon_(sched.epsilon),
        alpha_(sched.alpha),
        log_phi0_(std::log(phi0)),
        log_eps_(std::log(sched.epsilon)),
        log_alpha_(std::log(sched.alpha)),
        phi0_(phi0) {
    require(phi0 > 0.0, ErrorKind::OutOfRange, "phi0 must be positive");
  }

  bool alive(std::span<const std::uint32_t> counts, std::int64_t t) const {
    long double lhs = log_phi0_;
    for (std::size_t k = 0; k < counts.size(); ++k) lhs += static_cast<long double>(counts[k]) * log_deltas_[k];
    return decide(lhs, counts, t);
  }

  /// Same decision from a log-amplitude the caller accumulated itself.
  bool decide(long double log_amp, std::span<const std::uint32_t> counts, std::int64_t t) const {
    const long double rhs = static_cast<long double>(log_eps_) + static_cast<long double>(t) * log_alpha_;
    const long double gap = log_amp - rhs;
    const long double scale = std::max({1.0L, std::abs(rhs), std::abs(log_amp)});
    if (std::abs(gap) > kTieGuard * scale) return gap > 0;
    return detail::exact_survives(phi0_, deltas_, counts, epsilon_, alpha_, t);
  }

  std::span<const double> log_deltas() const noexcept { return log_deltas_; }
  double log_phi0() const noexcept { return log_phi0_; }

 private:
  std::vector<double> deltas_;
  std::vector<double> log_deltas_;
  double epsilon_, alpha_;
  double log_phi0_, log_eps_, log_alpha_;
  double phi0_;
};

struct TreeResult {
  std::int64_t t = 0;
  std::vector<mpz_class> counts;            // one per phi0
  double log10_total_paths = 0.0;           // t log10 K
  std::vector<double> log_surviving_fraction;  // natural log of N_t / K^t, one per phi0
};

inline TreeResult make_tree_result(std::int64_t t, std::size_t K, std::vector<mpz_class> counts) {
  TreeResult r;
  r.t = t;
  r.log10_total_paths = static_cast<double>(t) * std::log10(static_cast<double>(K));
  const double log_total = static_cast<double>(t) * std::log(static_cast<double>(K));
  for (const auto& c : counts) r.log_surviving_fraction.push_back(static_cast<double>(log_mpz(c)) - log_total);
  r.counts = std::move(counts);
  return r;
}

struct BruteForceResult {
  TreeResult result;
  std::vector<std::uint64_t> per_depth;     // N_s for s = 0..t
  std::vector<long double> leaf_log_amps;  // filled when requested
};

/// Depth-first walk over all K^t paths; the reference oracle for the DP.
inline BruteForceResult enumerate_brute(const BranchingSpec& spec, const Exogenous& sched, std::int64_t t,
                                        double phi0, bool keep_leaves = false) {
  require(t >= 0, ErrorKind::OutOfRange, "t must be non-negative");
  const std::size_t K = spec.size();
  require(static_cast<double>(t) * std::log(static_cast<double>(K)) <= std::log(kBruteForceLimit) + 1e-12,
          ErrorKind::TooLarge, "K^t exceeds the brute-force guard of 1e8 paths");
  const SurvivalRule rule(spec, sched, phi0);
  const auto logs = rule.log_deltas();

  BruteForceResult out;
  out.per_depth.assign(static_cast<std::size_t>(t) + 1, 0);
  std::vector<std::uint32_t> counts(K, 0);
  std::vector<long double> amp(static_cast<std::size_t>(t) + 1);
  std::vector<std::uint32_t> choice(static_cast<std::size_t>(t) + 1, 0);
  amp[0] = rule.log_phi0();
  out.per_depth[0] = 1;
  if (t == 0 && keep_leaves) out.leaf_log_amps.push_back(amp[0]);

  // Iterative DFS: choice[d] is the next branch to try below depth d.
  std::int64_t depth = 0;
  while (depth >= 0) {
    if (depth == t || choice[depth] == K) {
      if (depth == 0) break;
      --depth;
      --counts[choice[depth]];
      ++choice[depth];
      continue;
    }
    const std::uint32_t k = choice[depth];
    ++counts[k];
    const long double a = amp[depth] + logs[k];
    if (!rule.decide(a, counts, depth + 1)) {
      --counts[k];
      ++choice[depth];
      continue;
    }
    ++depth;
    amp[depth] = a;
    choice[depth] = 0;
    ++out.per_depth[depth];
    if (depth == t && keep_leaves) out.leaf_log_amps.push_back(a);
  }
  std::vector<mpz_class> n{mpz_class(static_cast<unsigned long>(out.per_depth.back()))};
  out.result = make_tree_result(t, K, std::move(n));
  return out;
}

/// Rank of (K-1)-subsets in colex order; indexes compositions of t into K parts.
class CompositionIndex {
 public:
  CompositionIndex(std::size_t K, std::int64_t t_max) : K_(K) {
    const std::size_t n = static_cast<std::size_t>(t_max) + K + 1;
    binom_.assign(n * K, 0.0L);
    for (std::size_t m = 0; m < n; ++m) {
      binom_[m * K] = 1;
      for (std::size_t j = 1; j < K; ++j) binom_[m * K + j] = m == 0 ? 0 : at(m - 1, j - 1) + at(m - 1, j);
    }
  }

  /// Number of compositions of t into K non-negative parts, C(t+K-1, K-1).
  long double layer_size(std::int64_t t) const {
    return K_ == 1 ? 1.0L : at(static_cast<std::size_t>(t) + K_ - 1, K_ - 1);
  }

  std::size_t rank(std::span<const std::uint32_t> n) const {
    std::size_t r = 0;
    std::size_t s = 0;
    for (std::size_t j = 1; j < K_; ++j) {
      s += n[j - 1];
      r += static_cast<std::size_t>(at(s + j - 1, j));
    }
    return r;
  }

 private:
  long double at(std::size_t m, std::size_t j) const { return binom_[m * K_ + j]; }

  std::size_t K_;
  std::vector<long double> binom_;
};

struct DpOptions {
  std::size_t memory_budget_bytes = std::size_t{3} << 30;
  bool stop_on_extinction = true;
};

/// Survivor counts N_t(phi0) for t = 0..t_max by dynamic programming over branch-count vectors.
///
/// Each layer stores only states with a non-zero count; counts are fixed-width limb arrays
/// sized for K^t. The returned vector has one big integer per t.
inline std::vector<mpz_class> count_survivors_dp_single(const BranchingSpec& spec, const Exogenous& sched,
                                                         std::int64_t t_max, double phi0,
                                                         const DpOptions& opt = {}) {
  require(t_max >= 0, ErrorKind::OutOfRange, "t_max must be non-negative");
  const std::size_t K = spec.size();
  const CompositionIndex index(K, t_max);
  const long double n_states = index.layer_size(t_max);
  const long double bits = static_cast<long double>(t_max) * std::log2(static_cast<long double>(K)) + 1;
  const long double limbs_max = std::floor(bits / GMP_NUMB_BITS) + 1;
  // dense rank index for two layers plus one count per state in the worst case
  const long double worst = n_states * (2 * sizeof(std::uint32_t) + limbs_max * sizeof(mp_limb_t) +
                                        K * sizeof(std::uint32_t));
  require(worst <= static_cast<long double>(opt.memory_budget_bytes), ErrorKind::StateExplosion,
          "C(t_max+K-1, K-1) = " + std::to_string(static_cast<double>(n_states)) +
              " states exceed the memory budget");

  const SurvivalRule rule(spec, sched, phi0);
  constexpr std::uint32_t kEmpty = std::numeric_limits<std::uint32_t>::max();
  constexpr std::uint32_t kDead = kEmpty - 1;

  struct Layer {
    std::size_t width = 1;
    std::vector<mp_limb_t> limbs;       // slot-major, `width` limbs each
    std::vector<std::uint32_t> comps;   // slot-major, K entries each
    std::size_t slots() const { return limbs.size() / width; }
  };

  std::vector<mpz_class> series;
  series.reserve(static_cast<std::size_t>(t_max) + 1);
  Layer cur;
  cur.width = 1;
  cur.limbs = {1};
  cur.comps.assign(K, 0);
  series.emplace_back(1);

  std::vector<std::uint32_t> slot_of;
  std::vector<std::uint32_t> target(K);
  for (std::int64_t t = 0; t < t_max; ++t) {
    if (cur.slots() == 0 && opt.stop_on_extinction) {
      series.emplace_back(0);
      continue;
    }
    const std::int64_t t1 = t + 1;
    Layer next;
    next.width = static_cast<std::size_t>(
        std::floor(static_cast<long double>(t1) * std::log2(static_cast<long double>(K)) / GMP_NUMB_BITS) + 1);
    slot_of.assign(static_cast<std::size_t>(index.layer_size(t1)), kEmpty);
    for (std::size_t s = 0; s < cur.slots(); ++s) {
      const std::uint32_t* n = &cur.comps[s * K];
      const mp_limb_t* w = &cur.limbs[s * cur.width];
      for (std::size_t k = 0; k < K; ++k) {
        std::copy(n, n + K, target.begin());
        ++target[k];
        const std::size_t r = index.rank(target);
        std::uint32_t& slot = slot_of[r];
        if (slot == kDead) continue;
        if (slot == kEmpty) {
          if (!rule.alive(target, t1)) {
            slot = kDead;
            continue;
          }
          slot = static_cast<std::uint32_t>(next.slots());
          next.limbs.resize(next.limbs.size() + next.width, 0);
          next.comps.insert(next.comps.end(), target.begin(), target.end());
        }
        mp_limb_t* dst = &next.limbs[static_cast<std::size_t>(slot) * next.width];
        mpn_add(dst, dst, static_cast<mp_size_t>(next.width), w, static_cast<mp_size_t>(cur.width));
      }
    }
    require(next.limbs.size() * sizeof(mp_limb_t) + slot_of.size() * sizeof(std::uint32_t) <=
                opt.memory_budget_bytes,
            ErrorKind::StateExplosion, "DP layer exceeds the memory budget");
    mpz_class total = 0, c;
    for (std::size_t s = 0; s < next.slots(); ++s) {
      const mp_limb_t* w = &next.limbs[s * next.width];
      mpz_import(c.get_mpz_t(), next.width, -1, sizeof(mp_limb_t), 0, 0, w);
      total += c;
    }
    series.push_back(std::move(total));
    cur = std::move(next);
  }
  return series;
}

/// DP series for every phi0, one TreeResult per t. Independent phi0 runs use separate workers.
inline std::vector<TreeResult> count_survivors_dp(const BranchingSpec& spec, const Exogenous& sched,
                                                  std::int64_t t_max, std::span<const double> phi0_list,
                                                  unsigned workers = 1, const DpOptions& opt = {}) {
  std::vector<std::vector<mpz_class>> per_phi(phi0_list.size());
  for_each_block(phi0_list.size(), 1, workers, [&](std::size_t i, std::size_t, std::size_t) {
    per_phi[i] = count_survivors_dp_single(spec, sched, t_max, phi0_list[i], opt);
  });
  std::vector<TreeResult> out;
  out.reserve(static_cast<std::size_t>(t_max) + 1);
  for (std::int64_t t = 0; t <= t_max; ++t) {
    std::vector<mpz_class> counts;
    for (auto& s : per_phi) counts.push_back(s[static_cast<std::size_t>(t)]);
    out.push_back(make_tree_result(t, spec.size(), std::move(counts)));
  }
  return out;
}

struct BornRatioRow {
  std::int64_t t;
  std::vector<double> ratios;  // one per phi pair
  double beta_hat;             // NaN when some count is zero
};

/// Ratio N_t(phi_a)/N_t(phi_b) per pair and the log-log slope over the whole phi grid.
inline std::vector<BornRatioRow> born_ratio_scan(const std::vector<TreeResult>& series,
                                                 std::span<const double> phi_grid,
                                                 std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<double> log_phi;
  for (double p : phi_grid) log_phi.push_back(std::log(p));
  std::vector<BornRatioRow> rows;
  for (const auto& r : series) {
    BornRatioRow row{r.t, {}, std::numeric_limits<double>::quiet_NaN()};
    for (auto [a, b] : pairs) {
      const long double la = log_mpz(r.counts[a]), lb = log_mpz(r.counts[b]);
      row.ratios.push_back(std::isfinite(lb) ? static_cast<double>(std::exp(la - lb))
                                             : std::numeric_limits<double>::quiet_NaN());
    }
    std::vector<double> ys;
    bool ok = true;
    for (const auto& c : r.counts) {
      ok = ok && c > 0;
      ys.push_back(static_cast<double>(log_mpz(c)));
    }
    if (ok && log_phi.size() >= 2) row.beta_hat = fit_power_law(log_phi, ys).slope;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<BornRatioRow> born_ratio_scan(const BranchingSpec& spec, const Exogenous& sched,
                                                 std::int64_t t_max, std::span<const double> phi_grid,
                                                 std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                                 unsigned workers = 1) {
  return born_ratio_scan(count_survivors_dp(spec, sched, t_max, phi_grid, workers), phi_grid, pairs);
}

// ---------------------------------------------------------------------------
// LCG-driven binary tree

struct LcgSpec {
  std::uint64_t p;
  std::uint64_t a;
  std::uint64_t c0 = 1;
};

inline LcgSpec make_lcg_spec(std::uint64_t p, std::uint64_t a, std::uint64_t c0 = 1) {
  require(p >= 2, ErrorKind::InvalidSpec, "modulus must be at least 2");
  require(a > 0, ErrorKind::InvalidSpec, "multiplier must be positive");
  require(c0 < p, ErrorKind::InvalidSpec, "initial state must lie in [0, p)");
  return {p, a, c0};
}

/// b = 2: (a c) mod p; b = 1: the reflection p - 1 - ((a c) mod p).
constexpr std::uint64_t lcg_next(std::uint64_t c, const LcgSpec& spec, int branch) noexcept {
  const auto r = static_cast<std::uint64_t>((static_cast<unsigned __int128>(spec.a) * c) % spec.p);
  return branch == 1 ? spec.p - 1 - r : r;
}

inline double lcg_delta(std::uint64_t c, const LcgSpec& spec) noexcept {
  return static_cast<double>(c) / static_cast<double>(spec.p);
}

enum class LcgMode { Exact, Sampled };

struct LcgTreeResult {
  std::int64_t t = 0;
  LcgMode mode = LcgMode::Exact;
  mpz_class count;               // exact survivors (exact mode)
  double log10_total_paths = 0;  // t log10 2
  double p_hat = 0;              // surviving fraction N_t / 2^t
  double se = 0;                 // zero in exact mode
  std::uint64_t n_paths = 0;
  std::uint64_t n_survivors = 0;
};

inline constexpr int kLcgExactMaxDepth = 25;

/// Survival of one path; `next_branch(s)` yields b_s in {1, 2}.
inline bool lcg_path_survives(const LcgSpec& spec, const Exogenous& sched, std::int64_t t, double log_phi0,
                              auto&& next_branch) {
  const double log_eps = std::log(sched.epsilon), log_alpha = std::log(sched.alpha);
  std::uint64_t c = spec.c0;
  double log_phi = log_phi0;
  for (std::int64_t s = 1; s <= t; ++s) {
    c = lcg_next(c, spec, next_branch(s));
    if (c == 0) return false;
    log_phi += std::log(lcg_delta(c, spec));
    if (log_phi < log_eps + static_cast<double>(s) * log_alpha) return false;
  }
  return true;
}

/// Exact enumeration of all 2^t paths (t <= 25) or uniform path sampling from the harness RNG.
inline LcgTreeResult lcg_tree(const LcgSpec& spec, const Exogenous& sched, std::int64_t t, double phi0, LcgMode mode,
                              std::uint64_t n_paths = 0, std::uint64_t seed = 0, unsigned workers = 1) {
  require(t >= 0, ErrorKind::OutOfRange, "t must be non-negative");
  require(phi0 > 0.0, ErrorKind::OutOfRange, "phi0 must be positive");
  LcgTreeResult out;
  out.t = t;
  out.mode = mode;
  out.log10_total_paths = static_cast<double>(t) * std::log10(2.0);
  const double log_phi0 = std::log(phi0);
  if (mode == LcgMode::Exact) {
    require(t <= kLcgExactMaxDepth, ErrorKind::TooLarge, "exact LCG mode is limited to 2^25 paths");
    const std::uint64_t total = std::uint64_t{1} << t;
    const auto survivors = block_reduce<std::uint64_t>(
        total, workers, 0,
        [&](std::size_t begin, std::size_t end) {
          std::uint64_t n = 0;
          for (std::uint64_t path = begin; path < end; ++path)
            n += lcg_path_survives(spec, sched, t, log_phi0,
                                   [&](std::int64_t s) { return (path >> (s - 1)) & 1 ? 2 : 1; });
          return n;
        },
        [](std::uint64_t& acc, std::uint64_t v) { acc += v; }, std::size_t{1} << 14);
    out.count = mpz_class(static_cast<unsigned long>(survivors));
    out.n_paths = total;
    out.n_survivors = survivors;
    out.p_hat = static_cast<double>(survivors) / static_cast<double>(total);
    return out;
  }
  require(n_paths >= 1, ErrorKind::OutOfRange, "sampled mode needs n_paths >= 1");
  const auto survivors = block_reduce<std::uint64_t>(
      n_paths, workers, 0,
      [&](std::size_t begin, std::size_t end) {
        std::uint64_t n = 0;
        for (std::uint64_t path = begin; path < end; ++path) {
          auto rng = rng_stream(seed, path);
          std::uint64_t bits = 0;
          int left = 0;
          n += lcg_path_survives(spec, sched, t, log_phi0, [&](std::int64_t) {
            if (left == 0) {
              bits = rng();
              left = 64;
            }
            const int b = (bits & 1) ? 2 : 1;
            bits >>= 1;
            --left;
            return b;
          });
        }
        return n;
      },
      [](std::uint64_t& acc, std::uint64_t v) { acc += v; });
  out.n_paths = n_paths;
  out.n_survivors = survivors;
  out.p_hat = static_cast<double>(survivors) / static_cast<double>(n_paths);
  out.se = std::sqrt(out.p_hat * (1.0 - out.p_hat) / static_cast<double>(n_paths));
  out.count = 0;
  return out;
}

/// Multipliers delta_t collected along uniformly sampled branch sequences of length `depth`.
inline std::vector<double> lcg_sample_deltas(const LcgSpec& spec, std::uint64_t n_transitions, std::int64_t depth,
                                             std::uint64_t seed) {
  require(depth >= 1, ErrorKind::OutOfRange, "depth must be positive");
  std::vector<double> out;
  out.reserve(n_transitions);
  for (std::uint64_t path = 0; out.size() < n_transitions; ++path) {
    auto rng = rng_stream(seed, path);
    std::uint64_t c = spec.c0;
    for (std::int64_t s = 0; s < depth && out.size() < n_transitions; ++s) {
      c = lcg_next(c, spec, (rng() >> 63) ? 2 : 1);
      out.push_back(lcg_delta(c, spec));
    }
  }
  return out;
}

}  // namespace born
