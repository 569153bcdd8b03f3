#pragma once

#include <cstddef>
#include <functional>

namespace nsds {

// 0 means one worker per hardware thread.
std::size_t resolve_threads(std::size_t requested);

// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
// executed exactly once; callers write results into per-index slots so the
// assembled output never depends on scheduling. The first exception thrown
// by any body is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace nsds
