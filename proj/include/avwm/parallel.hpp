#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace avwm {

// Run fn(i) for i in [0, n) across up to max_threads workers. Work items must
// be independent; results should be written into preallocated slots so the
// outcome does not depend on scheduling. Exceptions are rethrown on the
// caller thread.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned max_threads = 0) {
  if (n == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  unsigned workers = max_threads == 0 ? hw : std::min(max_threads, hw);
  if (workers > n) workers = static_cast<unsigned>(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace avwm
