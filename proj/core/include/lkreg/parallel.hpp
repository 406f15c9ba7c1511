#pragma once

#include <cstdint>
#include <functional>

#include "lkreg/common.hpp"

namespace lkreg {

// Work partitioning is by fixed-size chunks, independent of the thread
// count, and every chunk writes a disjoint output range. Results are
// therefore bitwise identical whether run on 1 thread (sequential mode)
// or many.

// 0 restores the hardware default.
void set_max_threads(int n);
int max_threads();

// Forces single-threaded execution (the CLI --sequential flag).
void set_sequential(bool on);
bool sequential_mode();

// Invokes fn(begin, end) over [0, n) in chunks of `grain`.
void parallel_chunks(index_t n, index_t grain,
                     const std::function<void(index_t, index_t)>& fn);

}  // namespace lkreg
