#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace lkca {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
    static std::atomic<unsigned> n{1};
    return n;
}
} // namespace detail

/// Caps worker threads used by the convolution kernels. 0 selects hardware concurrency.
inline void set_num_threads(unsigned n) {
    if (n == 0) {
        n = std::max(1u, std::thread::hardware_concurrency());
    }
    detail::thread_setting().store(n);
}

inline unsigned num_threads() { return detail::thread_setting().load(); }

/// Runs fn(i) for i in [0, count). Every index is an independent task that owns its
/// outputs, so results do not depend on the thread count.
template<typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(num_threads(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr       failure;
    std::atomic<bool>        failed{false};
    auto                     body = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            if (failed.load()) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) {
                    failure = std::current_exception();
                }
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) {
        pool.emplace_back(body);
    }
    body();
    for (auto& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace lkca
