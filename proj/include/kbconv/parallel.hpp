#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace kbconv {

/// results[i] = fn(i) for i < count on up to `threads` workers. Output order
/// and any rethrown exception (the lowest failing index) do not depend on
/// scheduling.
template <typename T, typename Fn>
std::vector<T> parallel_map(int count, int threads, Fn&& fn) {
  std::vector<T> results(count);
  std::vector<std::exception_ptr> errors(count);
  const int workers = std::max(1, std::min(threads, count));
  auto work = [&](std::atomic<int>& next) {
    for (int i = next++; i < count; i = next++) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::atomic<int> next{0};
  if (workers == 1) {
    work(next);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, std::ref(next));
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace kbconv
