#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace digzsl {

// Runs task(i) for i in [0, count) on at most `workers` threads. The
// exception of the lowest failing index is rethrown after all threads join.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& task) {
    if (count == 0) return;
    const std::size_t n = std::max<std::size_t>(1, std::min(workers, count));
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (n == 1) {
        loop();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n; ++t) threads.emplace_back(loop);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace digzsl
