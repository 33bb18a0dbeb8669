#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace cbmoco {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> n{0}; // 0 = use hardware concurrency
    return n;
}
} // namespace detail

/// Caps worker threads for all parallel kernels; n <= 0 restores the hardware default.
inline void set_num_threads(int n) { detail::thread_count_slot().store(n > 0 ? n : 0); }

inline int num_threads() {
    const int n = detail::thread_count_slot().load();
    if (n > 0) return n;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

/// Runs fn(chunk_index, begin, end) over [0, n) split into n_chunks contiguous ranges.
///
/// Chunk boundaries depend only on (n, n_chunks), never on the worker count, so any
/// per-chunk result combined later in chunk order is bitwise reproducible across runs
/// and across different --threads settings.
template <class Fn>
void parallel_chunks(std::int64_t n, int n_chunks, Fn&& fn) {
    if (n <= 0) return;
    if (n_chunks < 1) n_chunks = 1;
    if (std::int64_t(n_chunks) > n) n_chunks = int(n);

    auto chunk_range = [&](int c) {
        const std::int64_t lo = n * c / n_chunks;
        const std::int64_t hi = n * (c + 1) / n_chunks;
        return std::pair<std::int64_t, std::int64_t>(lo, hi);
    };

    const int workers = std::min(num_threads(), n_chunks);
    if (workers <= 1) {
        for (int c = 0; c < n_chunks; ++c) {
            auto [lo, hi] = chunk_range(c);
            fn(c, lo, hi);
        }
        return;
    }

    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int c = next.fetch_add(1);
            if (c >= n_chunks) break;
            auto [lo, hi] = chunk_range(c);
            fn(c, lo, hi);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(size_t(workers) - 1);
    for (int i = 0; i < workers - 1; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

/// Element-wise parallel loop; fn(i) must only write state owned by index i.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    parallel_chunks(n, num_threads() * 4, [&](int, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
}

/// Deterministic parallel sum: per-chunk partials accumulated in chunk order.
template <class Fn>
double parallel_sum(std::int64_t n, int n_chunks, Fn&& term) {
    std::vector<double> partial(size_t(std::max(1, n_chunks)), 0.0);
    parallel_chunks(n, n_chunks, [&](int c, std::int64_t lo, std::int64_t hi) {
        double s = 0;
        for (std::int64_t i = lo; i < hi; ++i) s += term(i);
        partial[size_t(c)] = s;
    });
    double total = 0;
    for (double p : partial) total += p;
    return total;
}

} // namespace cbmoco
