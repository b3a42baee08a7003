#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace lbopt {

// Thread budget: LBOPT_THREADS caps parallelism, default hardware concurrency.
inline int default_threads() {
  if (const char* env = std::getenv("LBOPT_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Index-parallel loop; f(i) must only touch slot i of any shared output, so
// results are identical for any thread count.
template <typename F>
void parallel_for(int64_t count, F&& f, int threads = 0) {
  if (threads <= 0) threads = default_threads();
  if (threads == 1 || count <= 1) {
    for (int64_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  int64_t chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int64_t lo = t * chunk;
    int64_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &f]() {
      for (int64_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace lbopt
