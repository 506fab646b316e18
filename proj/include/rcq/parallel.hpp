#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace rcq {

// Runs body(i) for i in [0, n). Tasks must be independent and write only to
// their own output slots; combined with per-index RNG streams this makes the
// result identical for any thread count.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t nw = std::min<std::size_t>(threads, n);
    std::vector<std::thread> workers;
    workers.reserve(nw);
    for (std::size_t w = 0; w < nw; ++w) {
        workers.emplace_back([&, w]() {
            for (std::size_t i = w; i < n; i += nw) body(i);
        });
    }
    for (auto& t : workers) t.join();
}

} // namespace rcq
