// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace kernelseer {

// Deterministic striped fan-out: worker w handles items w, w+T, w+2T, ...
// Callers reduce per-worker results in worker order, so outputs do not
// depend on scheduling.
inline void parallel_stripes(int count, int threads,
                             const std::function<void(int worker, int stride)>& fn) {
    const int t = std::max(1, threads);
    if (t == 1 || count <= 1) {
        fn(0, 1);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    for (int w = 0; w < t; ++w) {
        pool.emplace_back([&fn, w, t] { fn(w, t); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace kernelseer
