#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace mabt {

// Runs f(i) for i in [0, n) on up to `threads` workers using a static block
// partition. Results must be written to disjoint, preallocated slots; with
// that discipline the outcome is identical for every thread count.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::size_t workers = static_cast<std::size_t>(threads);
  if (workers > n) workers = n;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = n * w / workers;
    std::size_t hi = n * (w + 1) / workers;
    pool.emplace_back([lo, hi, &f] {
      for (std::size_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mabt
