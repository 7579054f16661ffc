#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tdsurv {

// Worker count for replicate/fold fan-out: hardware concurrency, capped by
// the TDSURV_THREADS environment variable and by the task count.
inline int worker_count(int n_tasks) {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("TDSURV_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n_tasks < n ? (n_tasks < 1 ? 1 : n_tasks) : n;
}

// Runs f(i) for i in [0, n) on a small worker pool. Tasks must be
// independent; results keyed by index stay deterministic regardless of the
// worker count. The first exception is rethrown after all workers join.
template <class F>
void parallel_for(int n, F&& f) {
    const int workers = worker_count(n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tdsurv
