#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace acnn {

// Parallelism cap: ACNN_THREADS if set, else logical cores.
inline int max_threads() {
    if (const char* env = std::getenv("ACNN_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (...) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Runs f(i) for i in [0, n), splitting the range into contiguous chunks so
// neighboring indices (which usually touch neighboring memory) stay on one
// thread. Each index must write only its own outputs; results are then
// independent of the thread count.
template <typename F>
void parallel_for(int n, F&& f) {
    const int threads = std::min(max_threads(), n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        const int begin = static_cast<int>(static_cast<long long>(n) * t / threads);
        const int end = static_cast<int>(static_cast<long long>(n) * (t + 1) / threads);
        pool.emplace_back([&, begin, end]() {
            for (int i = begin; i < end; ++i) f(i);
        });
    }
    for (std::thread& th : pool) th.join();
}

// Same contract, but only spawns threads when a chunk carries enough work to
// amortize spawn cost and cache contention; small kernels run serial.
inline constexpr std::int64_t kParallelWorkThreshold = 1 << 26;

template <typename F>
void parallel_for_work(int n, std::int64_t total_work, F&& f) {
    if (total_work < kParallelWorkThreshold) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    parallel_for(n, std::forward<F>(f));
}

}  // namespace acnn
