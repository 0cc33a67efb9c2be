#pragma once

#include <cstdint>
#include <functional>

namespace vpx {

// Worker count: VPX_THREADS if set (clamped to [1,256]), else hardware
// concurrency. Resolved once per process.
int worker_threads();

// Runs body(begin,end) over a fixed partition of [0,n). Chunk boundaries
// depend only on n and the resolved worker count, and bodies must write to
// disjoint outputs; results are then independent of scheduling order.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace vpx
