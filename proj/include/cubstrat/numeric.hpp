#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <thread>
#include <vector>

namespace cubstrat {

/// Pairwise (cascade) summation with a fixed tree shape: the result depends
/// only on the sequence of values, never on threading.
inline double pairwise_sum(std::span<const double> v) {
    constexpr std::size_t leaf = 32;
    if (v.size() <= leaf) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Same tree as pairwise_sum, accumulated in extended precision.
inline long double pairwise_sum_extended(std::span<const double> v) {
    constexpr std::size_t leaf = 32;
    if (v.size() <= leaf) {
        long double acc = 0.0L;
        for (double x : v) acc += x;
        return acc;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum_extended(v.first(half)) + pairwise_sum_extended(v.subspan(half));
}

/// Run body(i) for i in [0, n) on up to `threads` workers using contiguous
/// chunks. body must only write to slots owned by i.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t used = std::min(workers, n);
    const std::size_t chunk = (n + used - 1) / used;
    std::vector<std::jthread> pool;
    pool.reserve(used);
    for (std::size_t w = 0; w < used; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
}

}  // namespace cubstrat
