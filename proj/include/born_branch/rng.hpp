// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace born {

/// SplitMix64 finalizer; used only to turn user seeds into Philox keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Philox4x32-10 block function (Salmon et al., Random123).
struct Philox4x32 {
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Block apply(Block ctr, Key key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }
};

/// Counter-based random stream identified by (seed, stream_id).
///
/// Output depends only on (seed, stream_id, position), so streams can be handed to
/// any worker in any order and still reproduce bit-for-bit. The stream id occupies the
/// upper half of the Philox counter; the lower half counts blocks.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept : stream_id_(stream_id) {
    const std::uint64_t k = splitmix64(seed);
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  /// Jump to an absolute block position (each block yields two 64-bit outputs).
  void seek(std::uint64_t block) noexcept {
    block_ = block;
    lane_ = 2;
    has_spare_normal_ = false;
  }

  result_type operator()() noexcept {
    if (lane_ == 2) refill();
    return buffer_[lane_++];
  }

  /// Uniform on the open interval (0, 1); never returns 0 so log() is always finite.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double rate = 1.0) noexcept { return -std::log(uniform()) / rate; }

  /// Standard normal via Box-Muller; the cosine/sine pair is consumed in order.
  double normal() noexcept {
    if (has_spare_normal_) {
      has_spare_normal_ = false;
      return spare_normal_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_normal_ = r * std::sin(theta);
    has_spare_normal_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n) by Lemire's multiply-shift (n > 0).
  std::uint64_t below(std::uint64_t n) noexcept {
    for (;;) {
      const unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

 private:
  void refill() noexcept {
    const Philox4x32::Block ctr = {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                   static_cast<std::uint32_t>(stream_id_),
                                   static_cast<std::uint32_t>(stream_id_ >> 32)};
    const auto out = Philox4x32::apply(ctr, key_);
    buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
    buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
    ++block_;
    lane_ = 0;
  }

  Philox4x32::Key key_{};
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int lane_ = 2;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

/// Entry point used by every simulator: one independent stream per (seed, id).
inline RngStream rng_stream(std::uint64_t seed, std::uint64_t stream_id) noexcept {
  return RngStream(seed, stream_id);
}

/// Seed for a named sub-experiment so distinct tasks never share streams.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64(seed ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

}  // namespace born
