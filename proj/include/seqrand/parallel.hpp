#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace seqrand {

// Worker count: SEQRAND_THREADS if set and positive, otherwise the hardware
// concurrency (at least one).
inline std::size_t thread_budget() {
  if (const char* env = std::getenv("SEQRAND_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Evaluates fn(i) for i in [0, n) on up to `threads` workers. Results are
// stored by index so the output order never depends on scheduling. The first
// exception thrown by any task is rethrown after all workers join.
template <class Result, class Fn>
std::vector<Result> parallel_map(std::size_t n, Fn&& fn, std::size_t threads = thread_budget()) {
  std::vector<Result> out(n);
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace seqrand
