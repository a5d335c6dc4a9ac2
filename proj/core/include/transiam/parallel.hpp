#pragma once

#include <cstdint>
#include <functional>

namespace transiam {

/// Worker count for internal loops. Defaults to the hardware concurrency,
/// capped by the TRANSIAM_THREADS environment variable when set.
int thread_count();
void set_thread_count(int n);

/// Splits [0, n) into contiguous chunks, one per worker. Chunk boundaries depend
/// only on n and the worker count; callers write disjoint outputs per index so
/// results never depend on scheduling.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace transiam
