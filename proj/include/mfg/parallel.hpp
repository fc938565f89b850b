#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mfg {

/// Worker count for `tasks` independent jobs: MFG_THREADS if set to a
/// positive integer, otherwise the hardware concurrency.
inline int worker_count(int tasks) {
  int want = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MFG_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) want = v;
    } catch (const std::exception&) {
    }
  }
  return std::max(1, std::min(want, tasks));
}

/// Runs fn(i) for i in [0, count) on worker_count(count) threads. The first
/// exception thrown by any job is rethrown after all workers finish.
template <typename Fn>
void parallel_for(int count, Fn&& fn) {
  const int workers = worker_count(count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  auto run = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mfg
