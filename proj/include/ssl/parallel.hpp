#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ssl {

// SSL_THREADS caps the worker count; unset means hardware concurrency.
inline unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SSL_THREADS")) {
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (end != env && n >= 1) return static_cast<unsigned>(std::min<long>(n, 256));
  }
  return hw;
}

// Runs fn(i) for i in [0, n). Each index is handled by exactly one thread, so
// results written per index are independent of scheduling.
template <class F>
void parallel_for(std::size_t n, F&& fn, std::size_t grain = 256) {
  unsigned nt = thread_count();
  std::size_t chunks = (n + grain - 1) / grain;
  if (nt <= 1 || chunks <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, chunks));
  std::exception_ptr err;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (unsigned t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t c = t; c < chunks; c += nt) {
          std::size_t hi = std::min(n, (c + 1) * grain);
          for (std::size_t i = c * grain; i < hi; ++i) fn(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// Fixed-shape recursive summation; the result depends only on the input order.
inline double pairwise_sum(const double* a, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(a, half) + pairwise_sum(a + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& a) { return pairwise_sum(a.data(), a.size()); }

}  // namespace ssl
