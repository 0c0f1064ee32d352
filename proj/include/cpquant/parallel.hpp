#pragma once

#include <atomic>
#include <mutex>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace cpquant {

// Runs fn(i) for i in [0, n_items). Work items must be independent and write
// only to their own slots; results are then identical for any thread count.
inline void parallel_for(int n_items, int n_threads,
                         const std::function<void(int)>& fn) {
  if (n_items <= 0) return;
  n_threads = std::max(1, std::min(n_threads, n_items));
  if (n_threads == 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      int i = next.fetch_add(1);
      if (i >= n_items) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace cpquant
