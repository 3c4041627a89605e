#include "esm/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace esm {

namespace {
int g_threads = 0;  // 0 = unresolved

int resolve_threads() {
    if (const char* env = std::getenv("ESM_THREADS")) {  // env overrides --threads
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    if (g_threads > 0) return g_threads;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}
}  // namespace

void set_thread_count(int n) { g_threads = n; }

int thread_count() { return resolve_threads(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    int nt = std::min<int64_t>(resolve_threads(), n);
    if (nt <= 1) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    int64_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        int64_t lo = t * chunk;
        int64_t hi = std::min<int64_t>(lo + chunk, n);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace esm
