#pragma once

#include <cstddef>
#include <functional>

namespace fass {

// Worker cap: FASS_THREADS if set and positive, else hardware concurrency.
int worker_count();

// Runs fn(i) for i in [begin, end), split into contiguous chunks across at
// most worker_count() threads. Each index is visited by exactly one thread,
// so results are bitwise independent of the thread count as long as fn(i)
// writes only to storage owned by i.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn);

}  // namespace fass
