#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace qflow {

/// Data-parallel width: hardware concurrency, capped by QFLOW_THREADS.
inline int thread_count() {
    int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("QFLOW_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) n = std::min(n, cap);
        } catch (...) {
            // unparsable value: keep the default width
        }
    }
    return n;
}

/// Calls fn(k) for k in [begin, end). Each index is visited exactly once;
/// fn must only write state owned by its own index.
template <class Fn>
void parallel_for(int begin, int end, Fn&& fn) {
    const int total = end - begin;
    const int workers = std::min(thread_count(), std::max(total / 16, 1));
    if (workers <= 1) {
        for (int k = begin; k < end; ++k) fn(k);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const int chunk = (total + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int lo = begin + w * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int k = lo; k < hi; ++k) fn(k);
        });
    }
}

}  // namespace qflow
