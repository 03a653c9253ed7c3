#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace sshd {

// Thread cap: SSHD_THREADS env var, else hardware concurrency.
int max_threads();

// Runs fn(i) for i in [0,n). Work is split into contiguous chunks, one per
// thread; every output location is written by exactly one invocation, so
// results do not depend on the thread count. Reductions must be done by the
// caller in fixed index order.
template <typename F>
void parallel_for(int64_t n, F&& fn) {
  const int threads = static_cast<int>(std::min<int64_t>(max_threads(), n));
  if (threads <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace sshd
