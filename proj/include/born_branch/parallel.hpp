// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace born {

/// Worker count from BORN_BRANCH_WORKERS, falling back to the hardware concurrency.
inline unsigned default_workers() {
  if (const char* env = std::getenv("BORN_BRANCH_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Granularity used to pre-partition path indices; fixed so reductions never depend on workers.
inline constexpr std::size_t kPathBlock = 4096;

/// Runs `fn(block_index, begin, end)` over [0, n) cut into fixed blocks of `block` items.
///
/// Blocks are claimed dynamically but each writes only its own slot, so callers that merge
/// per-block results in block order get bit-identical output for any worker count.
template <class Fn>
void for_each_block(std::size_t n, std::size_t block, unsigned workers, Fn&& fn) {
  if (n == 0) return;
  const std::size_t n_blocks = (n + block - 1) / block;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_blocks)));
  auto run = [&](std::size_t b) { fn(b, b * block, std::min(n, (b + 1) * block)); };
  if (workers == 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < n_blocks; b = next++) {
        try {
          run(b);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Map-reduce over blocks: `map(begin, end) -> T`, merged left to right with `merge(acc, part)`.
template <class T, class Map, class Merge>
T block_reduce(std::size_t n, unsigned workers, T init, Map&& map, Merge&& merge,
               std::size_t block = kPathBlock) {
  const std::size_t n_blocks = (n + block - 1) / block;
  std::vector<T> parts(n_blocks, init);
  for_each_block(n, block, workers,
                 [&](std::size_t b, std::size_t begin, std::size_t end) { parts[b] = map(begin, end); });
  T acc = init;
  for (auto& p : parts) merge(acc, p);
  return acc;
}

}  // namespace born
