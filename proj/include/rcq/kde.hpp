#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rcq/common.hpp"
#include "rcq/grid.hpp"
#include "rcq/sde.hpp"

namespace rcq {

// Fixed-bandwidth Gaussian product-kernel density estimate.
struct KdeDensity {
    std::vector<Vec> points;
    Vec bandwidth; // per-axis, all positive
    int dim = 0;

    double eval(const Vec& y) const {
        if (static_cast<int>(y.size()) != dim)
            throw std::invalid_argument("KdeDensity::eval: dimension mismatch");
        double norm = 1.0;
        for (int a = 0; a < dim; ++a) norm *= bandwidth[a] * std::sqrt(two_pi);
        double s = 0.0;
        for (const Vec& p : points) {
            double e = 0.0;
            for (int a = 0; a < dim; ++a) {
                const double t = (y[a] - p[a]) / bandwidth[a];
                e += t * t;
            }
            s += std::exp(-0.5 * e);
        }
        return s / (norm * static_cast<double>(points.size()));
    }

    // Values on a tensor grid in row-major node order. For dim 2 the product
    // kernel factorizes into per-axis matrices and the grid sum becomes one
    // matrix product, which avoids N * nodes^2 exp calls.
    std::vector<double> eval_grid(const GridSpec& grid) const {
        if (grid.box.dim() != dim)
            throw std::invalid_argument("KdeDensity::eval_grid: dimension mismatch");
        const int g = grid.nodes_per_axis;
        const std::size_t n = points.size();
        if (dim != 2) {
            std::vector<double> out;
            out.reserve(static_cast<std::size_t>(grid.total_nodes()));
            for_each_node(grid, [&](const Vec& y) { out.push_back(eval(y)); });
            return out;
        }
        Eigen::MatrixXd a(g, n), b(g, n);
        for (int axis = 0; axis < 2; ++axis) {
            Eigen::MatrixXd& m = axis == 0 ? a : b;
            const double h = bandwidth[axis];
            for (int i = 0; i < g; ++i) {
                const double yi = grid.node_coord(axis, i);
                for (std::size_t j = 0; j < n; ++j) {
                    const double t = (yi - points[j][axis]) / h;
                    m(i, j) = std::exp(-0.5 * t * t);
                }
            }
        }
        const double norm = bandwidth[0] * bandwidth[1] * two_pi * static_cast<double>(n);
        Eigen::MatrixXd dens = a * b.transpose() / norm; // (i0, i1)
        std::vector<double> out(static_cast<std::size_t>(g) * g);
        for (int i0 = 0; i0 < g; ++i0)
            for (int i1 = 0; i1 < g; ++i1) out[static_cast<std::size_t>(i0) * g + i1] = dens(i0, i1);
        return out;
    }
};

/// Per-axis rule-of-thumb bandwidth h_i = std_i (4 / ((d+2) N))^{1/(d+4)}.
inline Vec silverman_bandwidth(const std::vector<Vec>& pts) {
    if (pts.empty()) throw degenerate_data_error("silverman_bandwidth: no points");
    const int d = static_cast<int>(pts[0].size());
    const double n = static_cast<double>(pts.size());
    const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
    Vec h(d);
    for (int a = 0; a < d; ++a) {
        double m = 0.0;
        for (const Vec& p : pts) m += p[a];
        m /= n;
        double var = 0.0;
        for (const Vec& p : pts) var += (p[a] - m) * (p[a] - m);
        var /= std::max(1.0, n - 1.0);
        const double sd = std::sqrt(var);
        if (sd <= 0.0)
            throw degenerate_data_error("silverman_bandwidth: zero spread on axis " +
                                        std::to_string(a) + "; supply a bandwidth");
        h[a] = sd * factor;
    }
    return h;
}

inline KdeDensity kde_fit(const std::vector<Vec>& pts, std::optional<Vec> bandwidth = {}) {
    if (pts.empty()) throw degenerate_data_error("kde_fit: empty sample");
    KdeDensity k;
    k.points = pts;
    k.dim = static_cast<int>(pts[0].size());
    if (bandwidth) {
        require(static_cast<int>(bandwidth->size()) == k.dim, "kde_fit: bandwidth dimension mismatch");
        for (double h : *bandwidth) require(h > 0.0, "kde_fit: bandwidth must be positive");
        k.bandwidth = *bandwidth;
    } else {
        k.bandwidth = silverman_bandwidth(pts);
    }
    return k;
}

inline KdeDensity kde_fit(const BurstEnsemble& ensemble, std::optional<Vec> bandwidth = {}) {
    return kde_fit(ensemble.endpoints, std::move(bandwidth));
}

namespace detail {
inline void check_coverage(const KdeDensity& k, const GridSpec& grid, const char* who) {
    for (int a = 0; a < k.dim; ++a) {
        double lo = k.points[0][a], hi = lo;
        for (const Vec& p : k.points) {
            lo = std::min(lo, p[a]);
            hi = std::max(hi, p[a]);
        }
        const double pad = 4.0 * k.bandwidth[a];
        if (grid.box.lo[a] > lo - pad || grid.box.hi[a] < hi + pad) {
            std::string msg = std::string(who) + ": grid does not cover the sample; axis " +
                              std::to_string(a) + " needs [" + fmt_g(lo - pad) + ", " +
                              fmt_g(hi + pad) + "] but grid has [" + fmt_g(grid.box.lo[a]) +
                              ", " + fmt_g(grid.box.hi[a]) + "]";
            throw coverage_error(msg);
        }
    }
}
} // namespace detail

/// Grid quadrature of |a - b|; for normalized densities the result lies in
/// [0, 2] up to quadrature error.
inline double l1_distance(const KdeDensity& a, const KdeDensity& b, const GridSpec& grid) {
    detail::check_coverage(a, grid, "l1_distance");
    detail::check_coverage(b, grid, "l1_distance");
    const std::vector<double> va = a.eval_grid(grid);
    const std::vector<double> vb = b.eval_grid(grid);
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
    return s * grid.cell_volume();
}

} // namespace rcq
