#pragma once

#include <functional>

namespace mobistore {

// Number of worker threads: MOBISTORE_THREADS when set (clamped to >= 1),
// otherwise the hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, count). Work is split into contiguous blocks, one
// per worker; results must be written to disjoint slots so the outcome is
// independent of the thread count. Serial when count or workers is small.
void parallel_for(int count, const std::function<void(int)>& fn);

} // namespace mobistore
