#pragma once

#include <cstdint>
#include <functional>

namespace garamost {

// Intra-op thread cap. Defaults to the hardware concurrency, capped by the
// GARAMOST_THREADS environment variable when set.
int thread_count();
void set_thread_count(int n);

// Runs fn(i) for i in [0, n). Work items must write disjoint outputs, so the
// result never depends on how items are split across threads.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace garamost
