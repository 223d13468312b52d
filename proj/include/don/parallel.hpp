#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace don {

namespace detail {
inline std::atomic<unsigned>& thread_cap() {
  static std::atomic<unsigned> cap{0};
  return cap;
}
}  // namespace detail

/// Caps worker threads for per-pixel stages. 0 means all hardware threads.
inline void set_thread_count(unsigned n) { detail::thread_cap() = n; }

inline unsigned thread_count() {
  unsigned cap = detail::thread_cap();
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return cap == 0 ? hw : cap;
}

/// Runs fn(row) for every row in [0, rows). Each row must be independent, so
/// the result never depends on the number of workers.
template <class Fn>
void parallel_rows(int rows, Fn&& fn) {
  unsigned workers = std::min<unsigned>(thread_count(), static_cast<unsigned>(std::max(rows, 1)));
  if (workers <= 1) {
    for (int r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int r = next++; r < rows; r = next++) fn(r);
    });
  }
}

}  // namespace don
