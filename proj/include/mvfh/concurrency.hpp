#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mvfh {

// Worker count: MVFH_THREADS env var wins, else hardware concurrency.
inline int default_thread_count() {
  if (const char* env = std::getenv("MVFH_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(0..count-1) over a small thread pool. Tasks must write only to their
// own slot of any shared output so results are independent of scheduling. The
// first exception thrown by a task is rethrown on the calling thread.
inline void parallel_for(int count, const std::function<void(int)>& fn, int threads = 0) {
  if (threads <= 0) threads = default_thread_count();
  threads = std::min(threads, count);
  if (count <= 0) return;
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mvfh
