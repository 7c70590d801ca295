#ifndef DOWNSCALER_THREADING_HPP
#define DOWNSCALER_THREADING_HPP

#include <cstddef>
#include <functional>

namespace downscaler {

// Worker cap. Reads DOWNSCALER_THREADS once; defaults to the number of
// logical cores. Always at least 1.
int max_threads();

// Splits [0, n) into exactly n_chunks contiguous ranges and runs
// fn(chunk_index, begin, end) for each, possibly on several threads.
// The chunk boundaries depend only on (n, n_chunks), never on the number of
// workers, so per-chunk sequential reductions are reproducible under any
// thread count.
void parallel_chunks(std::size_t n, int n_chunks,
                     const std::function<void(int, std::size_t, std::size_t)>& fn);

} // namespace downscaler

#endif
