#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace selfcens {

using Engine = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed of substream `counter` under `root`. Depends only on (root, counter), so
// replicate k draws the same numbers whatever worker runs it.
constexpr std::uint64_t substream_seed(std::uint64_t root, std::uint64_t counter) {
  return mix64(mix64(root) ^ mix64(counter + 0x632be59bd9b4e019ull));
}

inline Engine substream(std::uint64_t root, std::uint64_t counter) {
  return Engine(substream_seed(root, counter));
}

// Worker count: `requested` if nonzero, else SELFCENS_THREADS, else hardware concurrency.
std::size_t resolve_threads(std::size_t requested = 0);

// Calls body(k) for k in [0, count) on up to `threads` workers. The first
// exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace selfcens
