#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace contact_flow {

// Runs body(chunk) for chunk in [0, chunks) on up to `threads` workers
// (0 = hardware concurrency). Chunks must write disjoint output. If any chunk
// throws, the exception of the lowest-numbered failing chunk is rethrown so
// the observable behavior matches a sequential run.
inline void parallel_for_chunks(std::size_t chunks, unsigned threads,
                                const std::function<void(std::size_t)>& body) {
  if (chunks == 0) return;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, chunks));

  std::vector<std::exception_ptr> errors(chunks);
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      try {
        body(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t c = next.fetch_add(1);
          if (c >= chunks) return;
          try {
            body(c);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace contact_flow
