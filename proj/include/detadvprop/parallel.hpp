#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace detadv {

// Worker cap: DET_ADVPROP_THREADS, else hardware concurrency.
inline unsigned max_threads() {
  if (const char* env = std::getenv("DET_ADVPROP_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Index-parallel loop over [0, n). Each index is processed exactly once and
// writes only its own slot, so results do not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(max_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    threads.emplace_back([&, t]() {
      for (std::size_t i = t; i < n; i += workers) fn(i);
    });
  }
  for (std::thread& th : threads) th.join();
}

}  // namespace detadv
