#include "ptshadow/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ptshadow {

int hardware_threads()
{
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

namespace {

int read_env_threads()
{
    if (const char* s = std::getenv("PTSHADOW_THREADS")) {
        const int v = std::atoi(s);
        if (v > 0)
            return v;
    }
    return hardware_threads();
}

std::atomic<int> g_default_threads{0};

} // namespace

int default_threads()
{
    int v = g_default_threads.load(std::memory_order_relaxed);
    if (v <= 0) {
        v = read_env_threads();
        g_default_threads.store(v, std::memory_order_relaxed);
    }
    return v;
}

void set_default_threads(int n)
{
    g_default_threads.store(n > 0 ? n : 0, std::memory_order_relaxed);
}

void for_each_block(int n_blocks, int threads, const std::function<void(int)>& fn)
{
    if (n_blocks <= 0)
        return;
    if (threads <= 0)
        threads = default_threads();
    if (threads > n_blocks)
        threads = n_blocks;

    if (threads == 1) {
        for (int b = 0; b < n_blocks; ++b)
            fn(b);
        return;
    }

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= n_blocks)
                return;
            fn(b);
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
}

} // namespace ptshadow
