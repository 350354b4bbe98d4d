#pragma once

#include <cstddef>
#include <functional>

namespace dgcn {

// Worker threads to use: DGCN_THREADS when set to a positive integer,
// otherwise the hardware concurrency.
std::size_t worker_count();

// Runs fn(0) ... fn(n - 1) on up to worker_count() threads. Each index runs
// exactly once; the first exception thrown is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dgcn
