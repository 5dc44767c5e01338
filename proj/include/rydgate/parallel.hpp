#pragma once

#include <cstddef>
#include <functional>

namespace rydgate {

// Worker count: RYDGATE_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Work is pulled from a shared counter; callers
// write results into per-index slots and reduce in index order afterwards.
// The first exception thrown by any body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rydgate
