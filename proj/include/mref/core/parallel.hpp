#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mref {

/// Worker count for data-parallel loops; 0 means hardware concurrency.
struct Exec
{
    unsigned threads = 1;

    unsigned resolved() const
    {
        if (threads != 0)
            return threads;
        return std::max(1u, std::thread::hardware_concurrency());
    }
};

/// Runs fn(i) for i in [begin, end) over contiguous blocks, one block per worker.
/// fn must only write state owned by index i, which keeps results schedule-independent.
template <class Fn>
void parallel_for(int begin, int end, Exec exec, Fn&& fn)
{
    const int n = end - begin;
    if (n <= 0)
        return;
    const int workers = static_cast<int>(std::min<unsigned>(exec.resolved(), static_cast<unsigned>(n)));
    if (workers <= 1) {
        for (int i = begin; i < end; ++i)
            fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        const int lo = begin + static_cast<int>(static_cast<long long>(n) * w / workers);
        const int hi = begin + static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
        pool.emplace_back([&, lo, hi] {
            try {
                for (int i = lo; i < hi; ++i)
                    fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    pool.clear();
    if (error)
        std::rethrow_exception(error);
}

} // namespace mref
