#include "downscaler/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace downscaler {

int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("DOWNSCALER_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

void parallel_chunks(std::size_t n, int n_chunks,
                     const std::function<void(int, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (n_chunks < 1) n_chunks = 1;

    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t base = n / static_cast<std::size_t>(n_chunks);
    std::size_t rem = n % static_cast<std::size_t>(n_chunks);
    std::size_t begin = 0;
    for (int c = 0; c < n_chunks; ++c) {
        std::size_t len = base + (static_cast<std::size_t>(c) < rem ? 1 : 0);
        if (len == 0) continue;
        ranges.emplace_back(begin, begin + len);
        begin += len;
    }

    int workers = std::min<int>(max_threads(), static_cast<int>(ranges.size()));
    if (workers <= 1) {
        for (std::size_t c = 0; c < ranges.size(); ++c)
            fn(static_cast<int>(c), ranges[c].first, ranges[c].second);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t c = static_cast<std::size_t>(w); c < ranges.size();
                     c += static_cast<std::size_t>(workers))
                    fn(static_cast<int>(c), ranges[c].first, ranges[c].second);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace downscaler
