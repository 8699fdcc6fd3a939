#pragma once

#include <cstddef>
#include <functional>

namespace disk {

// Thread count from DISK_THREADS (0 or unset: hardware concurrency).
int thread_count();

// Runs f(i) for i in [0, n) partitioned into contiguous per-thread ranges.
// Workers touch disjoint output only, so results never depend on the
// thread count.  Exceptions from workers are rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

}  // namespace disk
