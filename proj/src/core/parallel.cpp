// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/core/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>

namespace smokegs {

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SMOKEGS_WORKERS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

void parallel_chunks(size_t n, int workers,
                     const std::function<void(int, size_t, size_t)>& fn) {
    workers = std::max(1, workers);
    if (n == 0) return;
    size_t w = std::min<size_t>(static_cast<size_t>(workers), n);
    if (w == 1) {
        fn(0, 0, n);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(w);
    for (size_t i = 0; i < w; ++i) {
        size_t begin = n * i / w;
        size_t end = n * (i + 1) / w;
        threads.emplace_back([&, i, begin, end] {
            try {
                fn(static_cast<int>(i), begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace smokegs
