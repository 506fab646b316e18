#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rcq/common.hpp"
#include "rcq/gibbs.hpp"
#include "rcq/rng.hpp"

namespace rcq {

// Weighted points on one level set of a reaction coordinate; empirical version
// of the stationary measure conditioned on that level set. stationary_mass is
// the unnormalized total of the conditioned measure, i.e. the pushforward
// density of the stationary law under the coordinate; it integrates to 1 over
// the coordinate range.
struct LevelSetSample {
    double z = 0.0;
    std::vector<Vec> points;
    std::vector<double> weights; // nonnegative, sum to 1
    double stationary_mass = 1.0;
};

using LevelSetSampler = std::function<LevelSetSample(double z, std::size_t n, RngStream&)>;

// Candidate observable mapping states to a one-dimensional coordinate, with
// gradient, attained range, and (where available) a sampler of the
// level-set-conditioned stationary measure.
struct ReactionCoordinate {
    enum class Kind { linear_torus, polar_angle, polar_radius, custom };

    Kind kind = Kind::custom;
    int dim = 0;
    std::string id = "custom";
    double param = 0.0; // family parameter (alpha for the linear family)
    std::function<double(const Vec&)> eval;
    std::function<Vec(const Vec&)> grad;
    std::array<double, 2> range{0.0, 0.0};
    LevelSetSampler level_sampler;

    double range_measure() const { return range[1] - range[0]; }
};

namespace detail {

// Uniform sample on the segment {p0 + t d : t in [tlo, thi]} obtained by
// clipping a line against a box. Returns false when the intersection is empty.
struct SegmentClip {
    Vec p0, d;
    double tlo = 0.0, thi = 0.0;
    bool ok = false;
};

inline SegmentClip clip_line_to_box(const Vec& p0, const Vec& d, const Box& box) {
    SegmentClip seg;
    seg.p0 = p0;
    seg.d = d;
    double tlo = -1e300, thi = 1e300;
    for (int a = 0; a < box.dim(); ++a) {
        if (std::abs(d[a]) < 1e-14) {
            if (p0[a] < box.lo[a] || p0[a] > box.hi[a]) return seg;
            continue;
        }
        const double t1 = (box.lo[a] - p0[a]) / d[a];
        const double t2 = (box.hi[a] - p0[a]) / d[a];
        tlo = std::max(tlo, std::min(t1, t2));
        thi = std::min(thi, std::max(t1, t2));
    }
    if (thi <= tlo) return seg;
    seg.tlo = tlo;
    seg.thi = thi;
    seg.ok = true;
    return seg;
}

// Convex polygon cut out of a 3-d box by the plane {w . x = c}, triangulated
// for exact uniform sampling.
struct PlaneSection {
    Vec center;                    // a point on the plane
    Vec u, v;                      // orthonormal in-plane basis
    std::vector<std::array<double, 2>> verts; // polygon in (u,v) coordinates
    std::vector<double> tri_cum;   // cumulative fan-triangle areas
    double area = 0.0;
};

inline PlaneSection plane_box_section(const Vec& w, double c, const Box& box) {
    PlaneSection sec;
    const double wn = norm2(w);
    sec.center = {c * w[0] / (wn * wn), c * w[1] / (wn * wn), c * w[2] / (wn * wn)};
    // in-plane orthonormal basis
    Vec ref = std::abs(w[0]) < 0.9 * wn ? Vec{1, 0, 0} : Vec{0, 1, 0};
    Vec u(3), v(3);
    // u = normalize(ref - (ref.w) w / |w|^2)
    const double proj = dot(ref, w) / (wn * wn);
    for (int i = 0; i < 3; ++i) u[i] = ref[i] - proj * w[i];
    const double un = norm2(u);
    for (int i = 0; i < 3; ++i) u[i] /= un;
    v = {(w[1] * u[2] - w[2] * u[1]) / wn, (w[2] * u[0] - w[0] * u[2]) / wn,
         (w[0] * u[1] - w[1] * u[0]) / wn};
    sec.u = u;
    sec.v = v;

    // intersect the 12 box edges with the plane
    std::vector<Vec> pts;
    for (int axis = 0; axis < 3; ++axis) {
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        for (int s1 = 0; s1 < 2; ++s1) {
            for (int s2 = 0; s2 < 2; ++s2) {
                Vec p(3);
                p[a1] = s1 ? box.hi[a1] : box.lo[a1];
                p[a2] = s2 ? box.hi[a2] : box.lo[a2];
                if (std::abs(w[axis]) < 1e-14) continue;
                p[axis] = (c - w[a1] * p[a1] - w[a2] * p[a2]) / w[axis];
                if (p[axis] >= box.lo[axis] - 1e-12 && p[axis] <= box.hi[axis] + 1e-12) {
                    p[axis] = std::clamp(p[axis], box.lo[axis], box.hi[axis]);
                    pts.push_back(p);
                }
            }
        }
    }
    if (pts.size() < 3) return sec;

    // project, deduplicate, sort by angle around the centroid
    std::vector<std::array<double, 2>> proj2;
    for (const Vec& p : pts) {
        Vec r = {p[0] - sec.center[0], p[1] - sec.center[1], p[2] - sec.center[2]};
        proj2.push_back({dot(r, u), dot(r, v)});
    }
    std::vector<std::array<double, 2>> uniq;
    for (const auto& q : proj2) {
        bool dup = false;
        for (const auto& r : uniq)
            if (std::abs(q[0] - r[0]) + std::abs(q[1] - r[1]) < 1e-10) dup = true;
        if (!dup) uniq.push_back(q);
    }
    if (uniq.size() < 3) return sec;
    double cx = 0.0, cy = 0.0;
    for (const auto& q : uniq) {
        cx += q[0];
        cy += q[1];
    }
    cx /= uniq.size();
    cy /= uniq.size();
    std::sort(uniq.begin(), uniq.end(), [&](const auto& a, const auto& b) {
        return std::atan2(a[1] - cy, a[0] - cx) < std::atan2(b[1] - cy, b[0] - cx);
    });
    sec.verts = uniq;

    // fan triangulation areas
    double cum = 0.0;
    for (std::size_t i = 1; i + 1 < uniq.size(); ++i) {
        const double ax = uniq[i][0] - uniq[0][0], ay = uniq[i][1] - uniq[0][1];
        const double bx = uniq[i + 1][0] - uniq[0][0], by = uniq[i + 1][1] - uniq[0][1];
        cum += 0.5 * std::abs(ax * by - ay * bx);
        sec.tri_cum.push_back(cum);
    }
    sec.area = cum;
    return sec;
}

inline Vec sample_plane_section(const PlaneSection& sec, RngStream& rng) {
    const double target = rng.uniform() * sec.area;
    std::size_t tri = 0;
    while (tri + 1 < sec.tri_cum.size() && sec.tri_cum[tri] < target) ++tri;
    const auto& A = sec.verts[0];
    const auto& B = sec.verts[tri + 1];
    const auto& C = sec.verts[tri + 2];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const double a = 1.0 - r1, b = r1 * (1.0 - r2), c = r1 * r2;
    const double px = a * A[0] + b * B[0] + c * C[0];
    const double py = a * A[1] + b * B[1] + c * C[1];
    Vec out(3);
    for (int i = 0; i < 3; ++i) out[i] = sec.center[i] + px * sec.u[i] + py * sec.v[i];
    return out;
}

// Shared construction for linear coordinates theta(x) = scale * (w . x) on the
// torus box [-pi, pi]^n. The stationary density is uniform and the gradient is
// constant, so the level-set measure is the uniform surface measure on the
// hyperplane section.
inline ReactionCoordinate make_linear_torus(Vec w, double scale, std::string id, double param) {
    const int n = static_cast<int>(w.size());
    ReactionCoordinate rc;
    rc.kind = ReactionCoordinate::Kind::linear_torus;
    rc.dim = n;
    rc.id = std::move(id);
    rc.param = param;
    rc.eval = [w, scale](const Vec& x) { return scale * dot(w, x); };
    rc.grad = [w, scale, n](const Vec&) {
        Vec g(n);
        for (int i = 0; i < n; ++i) g[i] = scale * w[i];
        return g;
    };
    double m = 0.0;
    for (double wi : w) m += std::abs(wi);
    m *= pi * std::abs(scale);
    rc.range = {-m, m};
    const Box box = Box::cube(n, -pi, pi);
    rc.level_sampler = [w, scale, box, m, n](double z, std::size_t count, RngStream& rng) {
        if (!(z > -m) || !(z < m))
            throw numeric_error("level set empty: z = " + std::to_string(z) +
                                " outside the open range (+-" + std::to_string(m) + ")");
        const double c = z / scale; // hyperplane w . x = c
        const double grad_norm = std::abs(scale) * norm2(w);
        const double pi_uniform = std::pow(two_pi, -n);
        LevelSetSample out;
        out.z = z;
        out.weights.assign(count, 1.0 / static_cast<double>(count));
        if (n == 2) {
            const double wn2 = dot(w, w);
            const Vec p0 = {c * w[0] / wn2, c * w[1] / wn2};
            const Vec d = {-w[1], w[0]};
            const SegmentClip seg = clip_line_to_box(p0, d, box);
            if (!seg.ok) throw numeric_error("level set empty after clipping");
            const double length = (seg.thi - seg.tlo) * norm2(d);
            out.stationary_mass = pi_uniform * length / grad_norm;
            for (std::size_t i = 0; i < count; ++i) {
                const double t = rng.uniform(seg.tlo, seg.thi);
                out.points.push_back({p0[0] + t * d[0], p0[1] + t * d[1]});
            }
            return out;
        }
        if (n == 3) {
            const PlaneSection sec = plane_box_section(w, c, box);
            if (sec.area <= 0.0) throw numeric_error("level set empty after clipping");
            out.stationary_mass = pi_uniform * sec.area / grad_norm;
            for (std::size_t i = 0; i < count; ++i)
                out.points.push_back(sample_plane_section(sec, rng));
            return out;
        }
        throw config_error("linear level-set sampler supports n in {2, 3}");
    };
    return rc;
}

} // namespace detail

/// Linear coordinate family theta_alpha(x) = (cos a x1 + sin a x2) / (pi (cos|a| + sin|a|))
/// on the 2-torus. For |alpha| <= pi/2 the normalization makes the attained
/// range exactly [-1, 1]; the stored range is always the attained one.
inline ReactionCoordinate linear_rc_alpha(double alpha) {
    require(alpha > -pi && alpha < pi, "linear_rc_alpha: alpha must lie in (-pi, pi)");
    const double denom = std::cos(std::abs(alpha)) + std::sin(std::abs(alpha));
    if (std::abs(denom) < 1e-9)
        throw config_error("linear_rc_alpha: normalization degenerate at |alpha| = 3 pi / 4");
    const double scale = 1.0 / (pi * denom);
    return detail::make_linear_torus({std::cos(alpha), std::sin(alpha)}, scale, "theta_alpha", alpha);
}

/// theta(x) = (x1 + ... + xn) / (n pi), range [-1, 1].
inline ReactionCoordinate linear_rc_sum(int n) {
    require(n == 2 || n == 3, "linear_rc_sum: n must be 2 or 3");
    Vec w(n, 1.0);
    return detail::make_linear_torus(std::move(w), 1.0 / (n * pi), "sum" + std::to_string(n), n);
}

inline LevelSetSample sample_level_set_linear(const ReactionCoordinate& rc, double z,
                                              std::size_t n, RngStream& rng) {
    require(rc.kind == ReactionCoordinate::Kind::linear_torus,
            "sample_level_set_linear: linear torus coordinate required");
    return rc.level_sampler(z, n, rng);
}

/// Polar angle phi(x) = atan2(x2, x1). Undefined at the origin.
inline ReactionCoordinate polar_rc_angle() {
    ReactionCoordinate rc;
    rc.kind = ReactionCoordinate::Kind::polar_angle;
    rc.dim = 2;
    rc.id = "phi";
    rc.range = {-pi, pi};
    rc.eval = [](const Vec& x) {
        if (std::hypot(x[0], x[1]) < 1e-12)
            throw numeric_error("polar angle undefined at the origin");
        return std::atan2(x[1], x[0]);
    };
    rc.grad = [](const Vec& x) {
        const double r2 = x[0] * x[0] + x[1] * x[1];
        if (r2 < 1e-24) throw numeric_error("polar angle gradient undefined at the origin");
        return Vec{-x[1] / r2, x[0] / r2};
    };
    return rc;
}

/// Polar radius r(x) = |x|, range (0, r_max].
inline ReactionCoordinate polar_rc_radius(double r_max = 2.0) {
    require(r_max > 0.0, "polar_rc_radius: r_max must be positive");
    ReactionCoordinate rc;
    rc.kind = ReactionCoordinate::Kind::polar_radius;
    rc.dim = 2;
    rc.id = "r";
    rc.range = {0.0, r_max};
    rc.eval = [](const Vec& x) { return std::hypot(x[0], x[1]); };
    rc.grad = [](const Vec& x) {
        const double r = std::hypot(x[0], x[1]);
        if (r < 1e-12) throw numeric_error("polar radius gradient undefined at the origin");
        return Vec{x[0] / r, x[1] / r};
    };
    return rc;
}

namespace detail {

// Inverse-CDF table over [lo, hi] for an unnormalized nonnegative density.
struct CdfTable {
    double lo = 0.0, hi = 0.0, step = 0.0;
    std::vector<double> cum; // cumulative masses per cell
    double total = 0.0;

    template <class F>
    static CdfTable build(double lo, double hi, std::size_t nodes, F&& density) {
        CdfTable t;
        t.lo = lo;
        t.hi = hi;
        t.step = (hi - lo) / static_cast<double>(nodes);
        t.cum.resize(nodes);
        double acc = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) {
            const double mid = lo + (i + 0.5) * t.step;
            const double q = density(mid);
            acc += (q > 0.0 ? q : 0.0) * t.step;
            t.cum[i] = acc;
        }
        t.total = acc;
        return t;
    }

    double sample(RngStream& rng) const {
        const double target = rng.uniform() * total;
        std::size_t leftn = 0, rightn = cum.size();
        while (leftn < rightn) {
            const std::size_t mid = (leftn + rightn) / 2;
            if (cum[mid] < target)
                leftn = mid + 1;
            else
                rightn = mid;
        }
        const std::size_t cell = std::min(leftn, cum.size() - 1);
        const double below = cell == 0 ? 0.0 : cum[cell - 1];
        const double mass = cum[cell] - below;
        const double frac = mass > 0.0 ? (target - below) / mass : 0.5;
        return lo + (static_cast<double>(cell) + frac) * step;
    }
};

} // namespace detail

/// Attaches a level-set sampler weighted by the stationary density.
///
/// Angle coordinate: the level set of phi = z is the ray t -> (t cos z, t sin z),
/// t in (0, r_max]; the conditioned measure has 1-d density proportional to
/// pi(t e_z) * t (the factor t is det(grad^T grad)^{-1/2} = r for the angle).
/// Radius coordinate: the level set of r = z is the circle of radius z; the
/// correction factor is 1 and the arc-length factor z is constant, so the
/// angular density is proportional to pi(z cos s, z sin s).
inline ReactionCoordinate with_weighted_sampler(ReactionCoordinate rc, const GibbsDensity& density,
                                                double r_max = 2.0, std::size_t table_nodes = 2048) {
    require(rc.kind == ReactionCoordinate::Kind::polar_angle ||
                rc.kind == ReactionCoordinate::Kind::polar_radius,
            "with_weighted_sampler: polar coordinate required");
    if (rc.kind == ReactionCoordinate::Kind::polar_angle) {
        rc.level_sampler = [gd = density, r_max, table_nodes](double z, std::size_t count,
                                                              RngStream& rng) {
            const double cz = std::cos(z), sz = std::sin(z);
            auto q = [&](double t) { return gd(Vec{t * cz, t * sz}) * t; };
            const auto table = detail::CdfTable::build(0.0, r_max, table_nodes, q);
            if (!(table.total > 1e-300))
                throw numeric_error("level set numerically empty: phi = " + std::to_string(z));
            LevelSetSample out;
            out.z = z;
            out.weights.assign(count, 1.0 / static_cast<double>(count));
            out.stationary_mass = table.total; // integral of pi * r along the ray
            for (std::size_t i = 0; i < count; ++i) {
                const double t = table.sample(rng);
                out.points.push_back({t * cz, t * sz});
            }
            return out;
        };
    } else {
        rc.level_sampler = [gd = density, table_nodes](double z, std::size_t count, RngStream& rng) {
            if (!(z > 0.0)) throw numeric_error("radius level must be positive");
            auto q = [&](double s) { return gd(Vec{z * std::cos(s), z * std::sin(s)}); };
            const auto table = detail::CdfTable::build(-pi, pi, table_nodes, q);
            if (!(table.total > 1e-300))
                throw numeric_error("level set numerically empty: r = " + std::to_string(z));
            LevelSetSample out;
            out.z = z;
            out.weights.assign(count, 1.0 / static_cast<double>(count));
            out.stationary_mass = z * table.total; // arc-length element is z d(angle)
            for (std::size_t i = 0; i < count; ++i) {
                const double s = table.sample(rng);
                out.points.push_back({z * std::cos(s), z * std::sin(s)});
            }
            return out;
        };
    }
    return rc;
}

inline LevelSetSample sample_level_set_weighted(const ReactionCoordinate& rc, double z,
                                                const GibbsDensity& density, std::size_t n,
                                                std::uint64_t seed) {
    ReactionCoordinate tmp = with_weighted_sampler(rc, density);
    RngStream rng = RngStream::from_path(seed, {0x6c766c73ULL});
    return tmp.level_sampler(z, n, rng);
}

} // namespace rcq
