#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace pagetext {

// Process-wide worker count for data-parallel kernels. 0 = hardware default.
void set_num_threads(int n);
int num_threads();

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// Chunks are disjoint, so kernels that only write inside their chunk are
// deterministic regardless of scheduling. Nested calls run serially.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace pagetext
