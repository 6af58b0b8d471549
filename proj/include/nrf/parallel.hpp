#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace nrf {

// Process-wide worker cap. 0 means "use hardware concurrency".
void set_thread_count(int n);
int thread_count();

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on (n, chunk_size), never on the worker count,
// so any reduction done per chunk and merged in chunk order is deterministic.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

// Convenience: parallel loop over items, chunked internally.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nrf
