#pragma once

#include <cmath>
#include <functional>

#include "rcq/common.hpp"

namespace rcq {

// Energy landscape with analytic gradient. The box bounds quadrature and
// histogram grids; the dynamics itself is unconstrained.
struct Potential {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    Box domain_box;

    int dim() const { return domain_box.dim(); }
};

inline Potential constant_potential(Box box) {
    Potential p;
    p.value = [](const Vec&) { return 0.0; };
    p.gradient = [d = box.dim()](const Vec&) { return Vec(d, 0.0); };
    p.domain_box = std::move(box);
    return p;
}

/// V(x) = ||x||^2 / 2
inline Potential quadratic_potential(int dim, double box_half = 4.0) {
    Potential p;
    p.value = [](const Vec& x) {
        double s = 0.0;
        for (double xi : x) s += xi * xi;
        return 0.5 * s;
    };
    p.gradient = [](const Vec& x) { return x; };
    p.domain_box = Box::cube(dim, -box_half, box_half);
    return p;
}

/// V(x) = height (x^2 - 1)^2, minima at +-1, barrier `height` at 0.
inline Potential double_well_1d(double height = 1.0, double box_half = 2.5) {
    Potential p;
    p.value = [height](const Vec& x) {
        const double q = x[0] * x[0] - 1.0;
        return height * q * q;
    };
    p.gradient = [height](const Vec& x) {
        return Vec{4.0 * height * x[0] * (x[0] * x[0] - 1.0)};
    };
    p.domain_box = Box::cube(1, -box_half, box_half);
    return p;
}

struct CircularPotentialParams {
    double sigma_radial = 10.0; // stiffness of the radial confinement
};

/// V(x) = cos(5 phi) + sigma (r - 1)^2 in polar coordinates. Five angular
/// minima of equal depth sit on the unit circle at phi = pi/5 + 2 pi k / 5.
inline Potential circular_potential(CircularPotentialParams params, double box_half = 2.0) {
    const double sig = params.sigma_radial;
    require(sig > 0.0, "circular_potential: sigma_radial must be positive");
    Potential p;
    p.value = [sig](const Vec& x) {
        const double r = std::hypot(x[0], x[1]);
        const double phi = std::atan2(x[1], x[0]);
        return std::cos(5.0 * phi) + sig * (r - 1.0) * (r - 1.0);
    };
    p.gradient = [sig](const Vec& x) {
        const double r = std::hypot(x[0], x[1]);
        if (r < 1e-12) throw numeric_error("circular_potential: gradient singular at origin");
        const double phi = std::atan2(x[1], x[0]);
        const double dang = -5.0 * std::sin(5.0 * phi); // d/dphi cos(5 phi)
        const double drad = 2.0 * sig * (r - 1.0);
        // grad phi = (-x2, x1)/r^2, grad r = x / r
        return Vec{dang * (-x[1] / (r * r)) + drad * x[0] / r,
                   dang * (x[0] / (r * r)) + drad * x[1] / r};
    };
    p.domain_box = Box::cube(2, -box_half, box_half);
    return p;
}

// Infinite wall outside the domain box; for samplers that need a distribution
// supported exactly on the box (the unconstrained integrator should not be run
// on this).
inline Potential hard_box(Potential base) {
    Potential p;
    p.domain_box = base.domain_box;
    p.value = [inner = base.value, box = base.domain_box](const Vec& x) {
        if (!box.contains(x)) return 1e100;
        return inner(x);
    };
    p.gradient = base.gradient;
    return p;
}

/// Largest relative mismatch between the analytic gradient and central finite
/// differences over the given points.
inline double max_gradient_mismatch(const Potential& pot, const std::vector<Vec>& points,
                                    double h = 1e-5) {
    double worst = 0.0;
    for (const Vec& x : points) {
        const Vec g = pot.gradient(x);
        for (int a = 0; a < pot.dim(); ++a) {
            Vec xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            const double fd = (pot.value(xp) - pot.value(xm)) / (2.0 * h);
            const double scale = std::max(1.0, std::abs(g[a]));
            worst = std::max(worst, std::abs(fd - g[a]) / scale);
        }
    }
    return worst;
}

} // namespace rcq
