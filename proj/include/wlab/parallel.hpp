#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace wlab {

// Work is always split into fixed-size chunks that do not depend on the
// thread count; partial results are merged sequentially in chunk order.
// Changing --threads therefore only changes which worker touches which
// chunk, never the arithmetic, so every reduction is bit-reproducible.

inline int& thread_count() {
    static int n = 1;
    return n;
}

inline void set_thread_count(int n) { thread_count() = n < 1 ? 1 : n; }

inline constexpr std::size_t kDefaultChunk = 1024;

// Runs fn(begin, end) over [0, n) partitioned into chunks of `chunk` items.
// fn must only write to disjoint state per index (or per chunk).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                         std::size_t chunk = kDefaultChunk) {
    if (n == 0) return;
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    const int nthreads = thread_count();
    if (nthreads <= 1 || nchunks <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    std::vector<std::thread> pool;
    const int spawn = static_cast<int>(std::min<std::size_t>(nthreads, nchunks));
    pool.reserve(spawn);
    for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

// Chunked map-reduce: per-chunk partials land in a slot indexed by chunk id
// and are combined in ascending chunk order.
template <typename T, typename MapFn, typename CombineFn>
T parallel_reduce(std::size_t n, T init, MapFn&& map_chunk, CombineFn&& combine,
                  std::size_t chunk = kDefaultChunk) {
    if (n == 0) return init;
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::vector<T> partial(nchunks, init);
    parallel_for(
        n,
        [&](std::size_t b, std::size_t e) {
            const std::size_t c = b / chunk;
            partial[c] = map_chunk(b, e);
        },
        chunk);
    T acc = init;
    for (std::size_t c = 0; c < nchunks; ++c) acc = combine(acc, partial[c]);
    return acc;
}

}  // namespace wlab
