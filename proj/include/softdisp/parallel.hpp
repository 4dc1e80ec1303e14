#pragma once

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace softdisp::detail {

/// Worker count for row-partitioned loops. Defaults to 1; the
/// SOFTDISP_THREADS environment variable overrides it.
inline int thread_count() {
    const char* env = std::getenv("SOFTDISP_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    if (n < 1) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0 && n > static_cast<int>(hw)) n = static_cast<int>(hw);
    return n;
}

/// Runs fn(row) for row in [0, height). Rows write disjoint output, so the
/// result is identical for any worker count.
template <class Fn>
void parallel_rows(int height, Fn&& fn) {
    int workers = thread_count();
    if (workers <= 1 || height <= 1) {
        for (int r = 0; r < height; ++r) fn(r);
        return;
    }
    if (workers > height) workers = height;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([=] {
            for (int r = w; r < height; r += workers) fn(r);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace softdisp::detail
