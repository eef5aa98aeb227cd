#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace tsync {

inline unsigned worker_count(std::size_t n_tasks) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("TORUS_SYNC_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1 && static_cast<unsigned long>(cap) < hw) hw = static_cast<unsigned>(cap);
    }
    if (n_tasks < hw) hw = static_cast<unsigned>(n_tasks);
    return hw == 0 ? 1 : hw;
}

// Independent tasks, results collected by task index; the first exception is
// rethrown in the calling thread after all workers join.
template <typename R>
std::vector<R> parallel_map(std::size_t n_tasks, const std::function<R(std::size_t)>& fn) {
    std::vector<R> out(n_tasks);
    const unsigned workers = worker_count(n_tasks);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_tasks || failed.load()) return;
                try {
                    out[i] = fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

} // namespace tsync
