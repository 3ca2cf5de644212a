#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace rolealign {

// Fixed work granularity for reductions. Chunk boundaries depend only on the
// problem size, never on the thread count, which keeps reductions bit-identical
// for any number of workers.
inline constexpr std::size_t kReductionChunk = 2048;

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kReductionChunk) {
  return (n + chunk - 1) / chunk;
}

// Calls fn(chunk_index, begin, end) once per chunk, distributing chunks over up
// to `threads` workers. fn must only write to per-chunk state.
template <class Fn>
void for_each_chunk(std::size_t n, int threads, Fn&& fn,
                    std::size_t chunk = kReductionChunk) {
  const std::size_t chunks = chunk_count(n, chunk);
  if (chunks == 0) return;
  const auto workers =
      static_cast<std::size_t>(std::min<std::size_t>(resolve_threads(threads), chunks));
  auto run = [&](std::size_t c) { fn(c, c * chunk, std::min(n, (c + 1) * chunk)); };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) run(c);
    });
  }
}

// Pairwise combination of per-chunk partials in index order. T needs operator+=.
template <class T>
T pairwise_reduce(std::vector<T> parts, const T& zero) {
  if (parts.empty()) return zero;
  for (std::size_t width = 1; width < parts.size(); width *= 2) {
    for (std::size_t i = 0; i + width < parts.size(); i += 2 * width) {
      parts[i] += parts[i + width];
    }
  }
  return parts.front();
}

}  // namespace rolealign
