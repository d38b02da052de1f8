#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mcmr {

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker, so
/// results written per index are identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn &&fn)
{
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) { fn(i); }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      auto i = next.fetch_add(1);
      if (i >= n) { return; }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) { failure = std::current_exception(); }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  for (std::size_t k = 1; k < threads; ++k) { pool.emplace_back(worker); }
  worker();
  pool.clear();
  if (failure) { std::rethrow_exception(failure); }
}

} // namespace mcmr
