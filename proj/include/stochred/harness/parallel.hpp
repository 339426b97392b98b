#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace stochred::harness {

inline constexpr const char* kThreadsEnv = "STOCHRED_THREADS";

/// Worker limit: STOCHRED_THREADS when set to a positive integer, otherwise
/// the hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs the tasks on at most `workers` threads. Each task writes only its
/// own outputs, so results do not depend on scheduling. The first exception
/// (in task order) is rethrown after all tasks finished.
inline void run_tasks(const std::vector<std::function<void()>>& tasks, unsigned workers) {
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < tasks.size();) {
      try {
        tasks[k]();
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(std::max(1u, workers), tasks.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace stochred::harness
