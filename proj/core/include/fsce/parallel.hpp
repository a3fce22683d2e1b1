#pragma once

#include <cstdint>
#include <functional>

namespace fsce {

// Worker cap from FSCE_THREADS (default 1). Parsed once per process.
int thread_cap();
// Overrides the cap for the current process; used by tests.
void set_thread_cap(int threads);

// Runs fn(i) for i in [0, count). Work is split into contiguous chunks, one per
// worker; callers must only write to disjoint outputs per index so results do
// not depend on the worker count.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace fsce
