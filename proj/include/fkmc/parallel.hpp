#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fkmc {

inline int default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Items are processed in fixed-size chunks and the per-chunk states are
/// merged in chunk order, so the reduction result does not depend on the
/// number of workers. Chunk size is a constant, not derived from the pool.
inline constexpr std::int64_t kReduceChunk = 4096;

/// Deterministic chunked map-reduce over indices [0, n).
///
/// `per_item(state, i)` accumulates item i into a chunk-local state that
/// starts as a copy of `init`; `merge(acc, chunk_state)` folds finished
/// chunks into the final result strictly in ascending chunk order.
/// The first exception thrown by any worker is rethrown on the caller.
template <class State, class PerItem, class Merge>
State chunked_reduce(std::int64_t n, int workers, const State& init,
                     PerItem per_item, Merge merge) {
  if (workers <= 0) workers = default_workers();
  const std::int64_t n_chunks = n <= 0 ? 0 : (n + kReduceChunk - 1) / kReduceChunk;
  std::vector<State> states(static_cast<std::size_t>(n_chunks), init);
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= n_chunks || failed.load(std::memory_order_relaxed)) return;
      const std::int64_t lo = c * kReduceChunk;
      const std::int64_t hi = std::min(n, lo + kReduceChunk);
      try {
        State& st = states[static_cast<std::size_t>(c)];
        for (std::int64_t i = lo; i < hi; ++i) per_item(st, i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = static_cast<int>(std::min<std::int64_t>(workers, std::max<std::int64_t>(n_chunks, 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) std::rethrow_exception(first_error);

  State acc = init;
  for (auto& st : states) merge(acc, st);
  return acc;
}

}  // namespace fkmc
