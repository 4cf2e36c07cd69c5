#include "sige/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace sige {

uint64_t fnv1a64(const void* data, size_t bytes, uint64_t seed) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

int worker_threads() {
  const char* env = std::getenv("SIGE_THREADS");
  if (!env || !*env) return 1;
  int n = std::atoi(env);
  if (n < 1) return 1;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  return std::min(n, hw);
}

namespace {
thread_local bool g_in_parallel = false;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  int workers = worker_threads();
  if (n == 0) return;
  if (workers < 2 || n < 2 || g_in_parallel) {
    bool prev = g_in_parallel;
    g_in_parallel = true;
    for (size_t i = 0; i < n; ++i) fn(i);
    g_in_parallel = prev;
    return;
  }
  size_t t = std::min<size_t>(static_cast<size_t>(workers), n);
  size_t chunk = (n + t - 1) / t;
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (size_t w = 0; w < t; ++w) {
    size_t lo = w * chunk;
    size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      g_in_parallel = true;
      for (size_t i = lo; i < hi; ++i) fn(i);
      g_in_parallel = false;
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace sige
