#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "rcq/common.hpp"

namespace rcq {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives a stream seed from a base seed and a tag path. Streams with distinct
// paths are statistically independent, which is what makes parallel schedules
// reproducible: every task owns the stream named by its index.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t tag : path) s = splitmix64(s ^ tag);
    return s;
}

// Deterministic random stream. Gaussian draws use an explicit Box-Muller pair
// so the byte-exact sequence does not depend on the standard library.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    static RngStream from_path(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        return RngStream(derive_seed(seed, path));
    }

    std::uint64_t next_u64() { return engine_(); }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    std::size_t uniform_index(std::size_t n) {
        std::size_t k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    Vec normal_vec(int dim) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = normal();
        return v;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace rcq
