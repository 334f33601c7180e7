#pragma once

#include <cstddef>
#include <functional>

namespace detdisc {

// Worker count for parallel sections. 0 or negative resets to hardware default.
void set_thread_count(int n);
int thread_count();

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on n and chunk_size, never on the thread count,
// so callers that reduce per-chunk results in chunk order get bit-stable sums.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

std::size_t num_chunks(std::size_t n, std::size_t chunk_size);

}  // namespace detdisc
