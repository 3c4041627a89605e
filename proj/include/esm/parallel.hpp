#pragma once

#include <cstdint>
#include <functional>

namespace esm {

// Worker count used by parallel_for. 0 = hardware concurrency. Resolution
// order: ESM_THREADS env var > set_thread_count() > hardware.
void set_thread_count(int n);
int thread_count();

// Static range partition across threads. Each index is processed exactly
// once and writes only its own output slots, so results are bitwise
// independent of the thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

}  // namespace esm
