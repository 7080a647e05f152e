#pragma once

#include <cstddef>
#include <functional>

namespace cvmcl {

/// Worker cap: CVMCL_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) across up to worker_count() threads using
/// contiguous chunks. Callers write results by index, so output ordering never
/// depends on scheduling. The first exception thrown by any worker is
/// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cvmcl
