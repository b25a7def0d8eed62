#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace vtrhm {

// Worker count resolution: explicit argument > VTRHM_WORKERS env > hardware.
inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("VTRHM_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0,n). Each index is executed exactly once by one
// worker; callers must make per-index work independent (write disjoint slots),
// which keeps results identical for any worker count.
inline void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
    workers = resolve_workers(workers);
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    auto run = [&] {
        for (;;) {
            const int64_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int t = static_cast<int>(std::min<int64_t>(workers, n));
    pool.reserve(t - 1);
    for (int k = 1; k < t; ++k) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
}

inline int shard_count(int64_t n, int workers) {
    workers = resolve_workers(workers);
    return static_cast<int>(std::max<int64_t>(1, std::min<int64_t>(workers, n)));
}

// Shard variant: fn(shard, begin, end) over a contiguous partition of [0,n)
// into exactly shard_count(n, workers) pieces. Useful when each worker owns a
// local accumulator merged afterwards in shard order (deterministic for
// integer or order-insensitive merges).
inline void parallel_shards(int64_t n, int workers,
                            const std::function<void(int, int64_t, int64_t)>& fn) {
    const int shards = shard_count(n, workers);
    if (n <= 0) return;
    std::vector<std::thread> pool;
    pool.reserve(shards - 1);
    for (int s = 0; s < shards; ++s) {
        const int64_t b = n * s / shards;
        const int64_t e = n * (s + 1) / shards;
        if (s + 1 < shards)
            pool.emplace_back([&fn, s, b, e] { fn(s, b, e); });
        else
            fn(s, b, e);
    }
    for (auto& th : pool) th.join();
}

}  // namespace vtrhm
