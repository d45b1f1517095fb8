#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace halp {

/// Worker count for data-parallel sweeps. Defaults to 1 (sequential);
/// the HALP_THREADS environment variable raises the cap.
inline int thread_budget() {
  static const int budget = [] {
    const char* env = std::getenv("HALP_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    if (n < 1) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0 && n > static_cast<int>(hw)) n = static_cast<int>(hw);
    return n;
  }();
  return budget;
}

/// Runs body(chunk_index, begin, end) over a fixed partition of [0, n).
/// The partition depends only on n, never on the thread budget, so chunk
/// results can be reduced deterministically by chunk index.
template <class Body>
void parallel_chunks(int64_t n, int num_chunks, Body&& body) {
  if (n <= 0) return;
  if (num_chunks > n) num_chunks = static_cast<int>(n);
  if (num_chunks < 1) num_chunks = 1;
  int threads = thread_budget();
  auto run_chunk = [&](int c) {
    int64_t begin = n * c / num_chunks;
    int64_t end = n * (c + 1) / num_chunks;
    body(c, begin, end);
  };
  if (threads <= 1 || num_chunks == 1) {
    for (int c = 0; c < num_chunks; ++c) run_chunk(c);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::atomic<int> next{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        int c = next.fetch_add(1);
        if (c >= num_chunks) break;
        run_chunk(c);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace halp
