#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spamm {

/// Worker count used by the library. Defaults to SPAMM_THREADS when set,
/// otherwise the hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Splits [0, n) into fixed chunks of `chunk` indices and calls
/// f(begin, end, chunk_index) for each. Chunk boundaries do not depend on
/// the thread count, so per-chunk partial results reduced in chunk order are
/// bit-identical for any number of workers.
template <class F>
void parallel_chunks(std::int64_t n, std::int64_t chunk, F&& f) {
    if (n <= 0) return;
    chunk = std::max<std::int64_t>(1, chunk);
    const std::int64_t n_chunks = (n + chunk - 1) / chunk;
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), n_chunks));
    auto run = [&](std::int64_t c) {
        const std::int64_t b = c * chunk;
        f(b, std::min(n, b + chunk), c);
    };
    if (workers <= 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c) run(c);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                run(c);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n_chunks);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline constexpr std::int64_t kDefaultChunk = 2048;

}  // namespace spamm
