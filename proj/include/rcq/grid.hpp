#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rcq/common.hpp"

namespace rcq {

// Tensor-product midpoint grid on a box. On periodic domains the midpoint rule
// coincides with the composite trapezoid rule, which is spectrally accurate
// for smooth integrands.
struct GridSpec {
    Box box;
    int nodes_per_axis = 128;

    std::int64_t total_nodes() const {
        std::int64_t t = 1;
        for (int i = 0; i < box.dim(); ++i) t *= nodes_per_axis;
        return t;
    }

    double cell_volume() const {
        return box.volume() / static_cast<double>(total_nodes());
    }

    double node_coord(int axis, int index) const {
        const double h = (box.hi[axis] - box.lo[axis]) / nodes_per_axis;
        return box.lo[axis] + (index + 0.5) * h;
    }

    std::vector<double> axis_nodes(int axis) const {
        std::vector<double> v(nodes_per_axis);
        for (int i = 0; i < nodes_per_axis; ++i) v[i] = node_coord(axis, i);
        return v;
    }
};

template <class F>
void for_each_node(const GridSpec& grid, F&& body) {
    const int d = grid.box.dim();
    const std::int64_t total = grid.total_nodes();
    if (total > (std::int64_t(1) << 31))
        throw numeric_error("grid too large: " + std::to_string(total) + " nodes");
    Vec x(d);
    std::vector<int> idx(d, 0);
    for (std::int64_t flat = 0; flat < total; ++flat) {
        for (int a = 0; a < d; ++a) x[a] = grid.node_coord(a, idx[a]);
        body(static_cast<const Vec&>(x));
        for (int a = d - 1; a >= 0; --a) {
            if (++idx[a] < grid.nodes_per_axis) break;
            idx[a] = 0;
        }
    }
}

template <class F>
double integrate_midpoint(const GridSpec& grid, F&& f) {
    double sum = 0.0;
    for_each_node(grid, [&](const Vec& x) { sum += f(x); });
    return sum * grid.cell_volume();
}

// Flat cell index of a point on a uniform grid partition; -1 when outside.
inline std::int64_t grid_cell_of(const GridSpec& grid, const Vec& x) {
    const int d = grid.box.dim();
    std::int64_t flat = 0;
    for (int a = 0; a < d; ++a) {
        const double h = (grid.box.hi[a] - grid.box.lo[a]) / grid.nodes_per_axis;
        const double t = (x[a] - grid.box.lo[a]) / h;
        if (t < 0.0 || t >= grid.nodes_per_axis) {
            if (x[a] == grid.box.hi[a]) {
                flat = flat * grid.nodes_per_axis + (grid.nodes_per_axis - 1);
                continue;
            }
            return -1;
        }
        flat = flat * grid.nodes_per_axis + static_cast<std::int64_t>(t);
    }
    return flat;
}

} // namespace rcq
