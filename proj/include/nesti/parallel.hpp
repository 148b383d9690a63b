#pragma once

#include <cstddef>
#include <functional>

namespace nesti {

// Worker count resolution order: explicit argument, NESTI_THREADS, hardware.
int default_thread_count();

// Runs fn(i) for every i in [0, n). Indices are statically partitioned into
// contiguous chunks, one per worker. Writes to distinct per-index slots need
// no synchronization. The first exception thrown by any worker is rethrown.
// threads <= 0 selects default_thread_count(); threads == 1 runs inline.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  int threads = 0);

}  // namespace nesti
