#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fsag {

// Worker cap: FSAG_THREADS when set, hardware concurrency otherwise.
inline int max_threads() {
    if (const char* env = std::getenv("FSAG_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Index-parallel loop. Each index writes only its own outputs, so results
// are identical for any thread count.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    const int threads = std::min<std::size_t>(max_threads(), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = static_cast<std::size_t>(t); i < count;
                 i += static_cast<std::size_t>(threads))
                fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace fsag
