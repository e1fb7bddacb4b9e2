#ifndef HSAFFINE_PARALLEL_HPP
#define HSAFFINE_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hsaffine {

/// Runs fn(i) for i in [0, n) on `workers` threads. Each index is processed
/// exactly once and results must be written to per-index slots by the caller,
/// which keeps output independent of the worker count. The first exception is
/// rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const std::size_t nw = std::max<std::size_t>(1, std::min<std::size_t>(workers < 1 ? 1 : workers, n));
    if (nw <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (std::size_t w = 0; w < nw; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += nw) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace hsaffine

#endif  // HSAFFINE_PARALLEL_HPP
