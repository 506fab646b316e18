#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcq {

using Vec = std::vector<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// Error taxonomy. config_error marks bad user input or parameters outside a
// documented operating range (CLI exit code 2); numeric_error marks runtime
// numerical failures (CLI exit code 3).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Requested evaluation grid does not cover the data; message carries a usable box.
struct coverage_error : numeric_error {
    using numeric_error::numeric_error;
};
struct degenerate_data_error : numeric_error {
    using numeric_error::numeric_error;
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// Axis-aligned box, the working domain for quadrature and histogram grids.
struct Box {
    Vec lo;
    Vec hi;

    int dim() const { return static_cast<int>(lo.size()); }

    double volume() const {
        double v = 1.0;
        for (int i = 0; i < dim(); ++i) v *= hi[i] - lo[i];
        return v;
    }

    bool contains(const Vec& x) const {
        if (static_cast<int>(x.size()) != dim()) return false;
        for (int i = 0; i < dim(); ++i)
            if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
    }

    static Box cube(int dim, double a, double b) {
        Box box;
        box.lo.assign(dim, a);
        box.hi.assign(dim, b);
        return box;
    }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw config_error(msg);
}

} // namespace rcq
