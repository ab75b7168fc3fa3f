#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace pdelin {

/// Worker count: PDELIN_THREADS when set, else the hardware concurrency.
inline unsigned thread_count() {
    if (const char* env = std::getenv("PDELIN_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1)
            throw ConfigError(std::string("PDELIN_THREADS must be a positive integer, got '") + env + "'");
        return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for every i in [0, count). Results must be written to
/// per-index slots; the exception from the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t count, F&& fn) {
    const std::size_t workers = std::min<std::size_t>(thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::size_t failed_at = count;
    std::exception_ptr error;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (i < failed_at) failed_at = i, error = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace pdelin
