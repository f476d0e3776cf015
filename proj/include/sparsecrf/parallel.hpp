#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sparsecrf {

/// Threading knobs shared by the batch operations. Work over sequences is
/// split into contiguous chunks whose partial results are merged in chunk
/// order. deterministic fixes the chunk count so results do not depend on
/// the thread count.
struct Execution {
  std::size_t threads = 1;
  bool deterministic = false;

  static constexpr std::size_t kFixedChunks = 16;

  std::size_t chunks(std::size_t n) const {
    std::size_t c = deterministic ? kFixedChunks : std::max<std::size_t>(threads, 1);
    return std::max<std::size_t>(1, std::min(c, n));
  }

  static std::size_t hardware() {
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
};

/// Calls fn(chunk, begin, end) for each chunk of [0, n), on up to
/// exec.threads threads. Exceptions are rethrown on the caller's thread.
template <typename Fn>
void for_each_chunk(std::size_t n, const Execution& exec, Fn&& fn) {
  const std::size_t chunks = exec.chunks(n);
  auto bounds = [&](std::size_t c) { return std::pair{n * c / chunks, n * (c + 1) / chunks}; };
  const std::size_t threads = std::min(std::max<std::size_t>(exec.threads, 1), chunks);
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      auto [b, e] = bounds(c);
      fn(c, b, e);
    }
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += threads) {
          auto [b, e] = bounds(c);
          fn(c, b, e);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace sparsecrf
