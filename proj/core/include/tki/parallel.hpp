#pragma once

#include <cstddef>
#include <functional>

namespace tki {

// Worker count used by parallel_for. 0 means "use the hardware default".
void set_thread_count(int n);
int thread_count();

// Runs body(i) for i in [0, count). Each index is visited exactly once and
// results must be written to per-index slots, so output never depends on the
// number of workers.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace tki
