#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stm::detail {

/// Runs body(i) for i in [begin, end) on up to `threads` workers. Each index
/// is handled exactly once; callers must not depend on execution order.
template <typename Body>
void parallel_for(int begin, int end, int threads, Body&& body) {
  const int count = end - begin;
  if (count <= 0) return;
  const int workers = std::clamp(threads, 1, count);
  if (workers == 1) {
    for (int i = begin; i < end; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = begin + w; i < end; i += workers) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace stm::detail
