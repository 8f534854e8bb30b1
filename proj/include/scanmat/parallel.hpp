#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace scanmat {

// Global worker count for row-parallel loops. Results never depend on it:
// work is split per row, writes are disjoint, and reductions run over
// row-indexed slots in a fixed pairwise order.
inline int& thread_count() {
  static int n = static_cast<int>(std::thread::hardware_concurrency());
  return n;
}

template <typename Fn>
void parallel_rows(int rows, Fn&& fn) {
  int workers = thread_count();
  if (workers < 1) workers = 1;
  if (workers == 1 || rows <= 1) {
    for (int y = 0; y < rows; ++y) fn(y);
    return;
  }
  if (workers > rows) workers = rows;
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        int y = next.fetch_add(1);
        if (y >= rows) return;
        fn(y);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// Fixed-order pairwise tree sum; bit-stable for any thread count because the
// reduction order depends only on the slot layout.
inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v.data(), v.size());
}

}  // namespace scanmat
