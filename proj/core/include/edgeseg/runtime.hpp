#pragma once

#include <cstdint>
#include <functional>

namespace edgeseg::runtime {

/// Intra-op parallelism for the conv kernels. Threads split disjoint output
/// ranges, so results are bitwise identical for any thread count; per-output
/// summation order never changes.
void set_num_threads(int n);
int num_threads();

/// Runs fn(begin, end) over [0, count) split into contiguous chunks.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn);

/// Smallest observable tick of the benchmark clock, in nanoseconds.
std::int64_t timer_resolution_ns();

}  // namespace edgeseg::runtime
