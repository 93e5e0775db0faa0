#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace frailty {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Every index runs
/// even if some fail; the exception from the lowest failing index is
/// rethrown, so the reported error never depends on scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn)
{
    if (n == 0) return;
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::optional<std::size_t> failed_index;
    std::exception_ptr failure;

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failed_index || i < *failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
}

} // namespace frailty
