#pragma once

#include <cstddef>
#include <functional>

namespace se3spline {

/// Worker count: SE3SPLINE_THREADS if set (0 means all cores), otherwise all
/// cores. Always at least 1.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into per-index slots so the outcome does not depend on the
/// schedule. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace se3spline
