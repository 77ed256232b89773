#include "promobench/common.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace promobench {

namespace {
std::atomic<int> g_default_threads{0};
}

int default_thread_count() {
  int n = g_default_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_thread_count(int n) { g_default_threads.store(n, std::memory_order_relaxed); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn, int n_threads) {
  if (n <= 0) return;
  int workers = n_threads > 0 ? n_threads : default_thread_count();
  workers = static_cast<int>(std::min<int64_t>(workers, n));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  for (int t = 1; t < workers; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(fn, lo, hi);
  }
  fn(0, std::min<int64_t>(chunk, n));
  for (auto& th : pool) th.join();
}

}  // namespace promobench
