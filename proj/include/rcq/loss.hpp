#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <vector>

#include "rcq/common.hpp"
#include "rcq/csv.hpp"
#include "rcq/gibbs.hpp"
#include "rcq/grid.hpp"
#include "rcq/kde.hpp"
#include "rcq/parallel.hpp"
#include "rcq/reaction_coordinate.hpp"
#include "rcq/rng.hpp"
#include "rcq/sde.hpp"
#include "rcq/stats.hpp"
#include "rcq/torus.hpp"

namespace rcq {

// Monte Carlo discretization knobs shared by the loss functionals:
//   n_z      coordinate-range grid (midpoint rule),
//   n_level  points drawn per level set,
//   n_pairs  distinct point pairs per level used for the double integral,
//   m_outer  stationary start points for the outer integral.
struct LossQuadConfig {
    std::size_t n_z = 21;
    std::size_t n_level = 32;
    std::size_t n_pairs = 24;
    std::size_t m_outer = 64;
    std::uint64_t seed = 0;
    int threads = 1;
    // Level measure convention for the integrand. The loss functionals use
    // probability measures per level set (false); the variance study uses the
    // raw conditioned measure, whose total mass tilts each level by the
    // squared pushforward density (true).
    bool weight_levels_by_mass = false;
    // Selects an independent family of level-set draws while keeping the same
    // stationary start points; used to split inner sampling noise off the
    // integrand variance.
    std::uint64_t inner_stream = 0;

    void validate() const {
        require(n_z >= 1 && n_level >= 2 && n_pairs >= 1 && m_outer >= 1,
                "LossQuadConfig: all counts must be positive (n_level >= 2)");
        require(n_pairs <= n_level * (n_level - 1) / 2,
                "LossQuadConfig: n_pairs exceeds the number of distinct pairs");
    }
};

// Monte Carlo estimate with its error bar. per_sample_f is retained when the
// estimate is an outer average over stationary start points, enabling the
// variance diagnostics.
struct LossEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t m = 0;
    std::vector<double> per_sample_f;
};

// Unified access to the transition kernel: forward(x) yields an evaluable
// density p(x, .), stationary(y) is pi(y), and ratio composes the two. The
// shared grid backs L1 distances between forward densities; forward_grid,
// when set, evaluates a forward density on that grid in one call (batched
// kernel estimates are much cheaper that way).
struct TransitionAccess {
    enum class Mode { analytic_torus, empirical_kde, discrete_standin };
    Mode mode = Mode::analytic_torus;
    std::function<std::function<double(const Vec&)>(const Vec&)> forward;
    std::function<double(const Vec&)> stationary;
    std::function<std::vector<double>(const Vec&, const GridSpec&)> forward_grid;
    GridSpec l1_grid;

    double ratio(const Vec& x, const Vec& y) const { return forward(x)(y) / stationary(y); }

    std::vector<double> forward_on_grid(const Vec& x, const GridSpec& grid) const {
        if (forward_grid) return forward_grid(x, grid);
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(grid.total_nodes()));
        const auto fwd = forward(x);
        for_each_node(grid, [&](const Vec& y) { out.push_back(fwd(y)); });
        return out;
    }
};

inline TransitionAccess make_torus_access(const TorusKernel& kernel, int grid_nodes = 128) {
    TransitionAccess acc;
    acc.mode = TransitionAccess::Mode::analytic_torus;
    acc.l1_grid = GridSpec{Box::cube(kernel.spec().n, -pi, pi), grid_nodes};
    acc.forward = [kernel](const Vec& x) {
        return [kernel, x](const Vec& y) { return kernel.density(x, y); };
    };
    acc.forward_grid = [kernel](const Vec& x, const GridSpec& grid) {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(grid.total_nodes()));
        for_each_node(grid, [&](const Vec& y) { out.push_back(kernel.density(x, y)); });
        return out;
    };
    acc.stationary = [pi_val = kernel.stationary()](const Vec&) { return pi_val; };
    return acc;
}

struct KdeAccessConfig {
    std::size_t n_endpoints = 1024; // burst size behind every evaluated density
    std::optional<Vec> bandwidth;   // fixed per experiment; pilot rule-of-thumb when absent
    int grid_nodes = 96;
    double stationary_floor = 1e-12;
    int threads = 1;
};

/// Rule-of-thumb bandwidth from a pilot burst; computing it once and passing
/// it to every access keeps the smoothing scale fixed across an experiment.
inline Vec pilot_bandwidth(const Potential& pot, const SdeConfig& cfg, std::size_t n_endpoints,
                           const Vec& x0) {
    SdeConfig pilot_cfg = cfg;
    pilot_cfg.seed = derive_seed(cfg.seed, {0x70696c6fULL});
    return silverman_bandwidth(simulate_burst(x0, pot, pilot_cfg, n_endpoints).endpoints);
}

/// Empirical kernel access: p(x, .) is a Gaussian KDE over the endpoints of a
/// fresh burst started at x, with one fixed bandwidth for the whole
/// experiment. Burst seeds are derived from the coordinates of x, so access is
/// a pure function of (config, x) regardless of evaluation order.
inline TransitionAccess make_kde_access(const Potential& pot, const SdeConfig& cfg,
                                        const GibbsDensity& stationary,
                                        const KdeAccessConfig& kde_cfg) {
    TransitionAccess acc;
    acc.mode = TransitionAccess::Mode::empirical_kde;
    acc.l1_grid = GridSpec{pot.domain_box, kde_cfg.grid_nodes};

    Vec bandwidth;
    if (kde_cfg.bandwidth) {
        bandwidth = *kde_cfg.bandwidth;
    } else {
        Vec x0(pot.dim());
        for (int i = 0; i < pot.dim(); ++i)
            x0[i] = 0.5 * (pot.domain_box.lo[i] + pot.domain_box.hi[i]) + 0.3;
        bandwidth = pilot_bandwidth(pot, cfg, kde_cfg.n_endpoints, x0);
    }

    auto fit_for = [pot, cfg, kde_cfg, bandwidth](const Vec& x) {
        std::uint64_t h = cfg.seed ^ 0x6b646566ULL;
        for (double xi : x) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(xi));
            std::memcpy(&bits, &xi, sizeof(bits));
            h = splitmix64(h ^ bits);
        }
        SdeConfig burst_cfg = cfg;
        burst_cfg.seed = h;
        const BurstEnsemble burst =
            simulate_burst(x, pot, burst_cfg, kde_cfg.n_endpoints, kde_cfg.threads);
        return kde_fit(burst, bandwidth);
    };
    acc.forward = [fit_for](const Vec& x) {
        KdeDensity kde = fit_for(x);
        return [kde = std::move(kde)](const Vec& y) { return kde.eval(y); };
    };
    acc.forward_grid = [fit_for](const Vec& x, const GridSpec& grid) {
        return fit_for(x).eval_grid(grid);
    };
    acc.stationary = [stationary, floor = kde_cfg.stationary_floor](const Vec& y) {
        return std::max(stationary(y), floor);
    };
    return acc;
}

using StationarySampler = std::function<std::vector<Vec>(std::size_t n, std::uint64_t seed)>;

inline StationarySampler uniform_box_sampler(Box box) {
    return [box](std::size_t n, std::uint64_t seed) {
        RngStream rng = RngStream::from_path(seed, {0x756e6966ULL});
        std::vector<Vec> out(n, Vec(box.dim()));
        for (std::size_t k = 0; k < n; ++k)
            for (int a = 0; a < box.dim(); ++a) out[k][a] = rng.uniform(box.lo[a], box.hi[a]);
        return out;
    };
}

inline StationarySampler metropolis_sampler(Potential pot, double beta,
                                            MetropolisOptions opts = {}) {
    return [pot = std::move(pot), beta, opts](std::size_t n, std::uint64_t seed) {
        return sample_stationary(pot, beta, n, seed, opts);
    };
}

namespace detail {

inline std::vector<double> midpoints(const std::array<double, 2>& range, std::size_t n) {
    std::vector<double> z(n);
    const double h = (range[1] - range[0]) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) z[j] = range[0] + (j + 0.5) * h;
    return z;
}

// n distinct unordered index pairs drawn uniformly from {0..count-1}^2.
inline std::vector<std::pair<std::size_t, std::size_t>> draw_pairs(std::size_t n_pairs,
                                                                   std::size_t count,
                                                                   RngStream& rng) {
    const std::size_t all = count * (count - 1) / 2;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(n_pairs);
    if (n_pairs >= all) {
        for (std::size_t a = 0; a < count; ++a)
            for (std::size_t b = a + 1; b < count; ++b) out.emplace_back(a, b);
        return out;
    }
    std::vector<std::uint64_t> seen;
    seen.reserve(n_pairs);
    while (out.size() < n_pairs) {
        std::size_t a = rng.uniform_index(count);
        std::size_t b = rng.uniform_index(count - 1);
        if (b >= a) ++b;
        if (a > b) std::swap(a, b);
        const std::uint64_t key = static_cast<std::uint64_t>(a) * count + b;
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        out.emplace_back(a, b);
    }
    return out;
}

inline void require_sampler(const ReactionCoordinate& rc) {
    if (!rc.level_sampler)
        throw config_error("reaction coordinate '" + rc.id + "' carries no level-set sampler");
}

} // namespace detail

/// Integrand of the outer stationary integral in the pairwise observable loss:
///   f(x) = (1/|Z|) int_Z E_{y1,y2 ~ mu_z} | p(x,y1)/pi(y1) - p(x,y2)/pi(y2) | dz,
/// estimated with a midpoint grid over the coordinate range and independent
/// level-set pairs. Expensive forward densities are built once per call.
inline double integrand_f(const Vec& x, const ReactionCoordinate& rc, const TransitionAccess& access,
                          const LossQuadConfig& quad, RngStream& rng) {
    quad.validate();
    detail::require_sampler(rc);
    const auto zs = detail::midpoints(rc.range, quad.n_z);
    const auto p_x = access.forward(x);
    double total = 0.0;
    for (double z : zs) {
        LevelSetSample sample;
        try {
            sample = rc.level_sampler(z, quad.n_level, rng);
        } catch (const std::exception& e) {
            throw numeric_error("integrand_f: level z = " + fmt_g(z) + ": " + e.what());
        }
        std::vector<double> vals(sample.points.size());
        for (std::size_t i = 0; i < sample.points.size(); ++i)
            vals[i] = p_x(sample.points[i]) / access.stationary(sample.points[i]);
        const auto pairs = detail::draw_pairs(quad.n_pairs, sample.points.size(), rng);
        double inner = 0.0;
        for (const auto& [a, b] : pairs) inner += std::abs(vals[a] - vals[b]);
        inner /= static_cast<double>(pairs.size());
        if (quad.weight_levels_by_mass)
            inner *= sample.stationary_mass * sample.stationary_mass;
        total += inner;
    }
    return total / static_cast<double>(quad.n_z);
}

/// Differential observable-side loss: outer Monte Carlo average of f over
/// m_outer stationary start points, with per-sample values retained.
inline LossEstimate loss_deflat(const ReactionCoordinate& rc, const TransitionAccess& access,
                                const StationarySampler& sampler, const LossQuadConfig& quad) {
    quad.validate();
    const std::vector<Vec> starts = sampler(quad.m_outer, derive_seed(quad.seed, {0x73746172ULL}));
    LossEstimate est;
    est.m = quad.m_outer;
    est.per_sample_f.assign(quad.m_outer, 0.0);
    std::vector<std::string> failures(quad.m_outer);
    parallel_for(quad.m_outer, quad.threads, [&](std::size_t k) {
        try {
            RngStream rng = RngStream::from_path(quad.seed, {0x6465666cULL, k, quad.inner_stream});
            est.per_sample_f[k] = integrand_f(starts[k], rc, access, quad, rng);
        } catch (const std::exception& e) {
            failures[k] = e.what();
        }
    });
    for (std::size_t k = 0; k < quad.m_outer; ++k)
        if (!failures[k].empty())
            throw numeric_error("loss_deflat: sample " + std::to_string(k) + ": " + failures[k]);
    est.value = mean(est.per_sample_f);
    est.std_error = quad.m_outer >= 2 ? std_error_of_mean(est.per_sample_f) : 0.0;
    return est;
}

/// Differential density-side loss: mean pairwise L1 distance between forward
/// densities started on a common level set, averaged over the coordinate
/// range. No outer stationary integral is involved.
inline LossEstimate loss_lump_differential(const ReactionCoordinate& rc,
                                           const TransitionAccess& access,
                                           const LossQuadConfig& quad) {
    quad.validate();
    detail::require_sampler(rc);
    const auto zs = detail::midpoints(rc.range, quad.n_z);
    const double cell_vol = access.l1_grid.cell_volume();
    double total = 0.0;
    double var_acc = 0.0;
    for (std::size_t j = 0; j < zs.size(); ++j) {
        RngStream rng = RngStream::from_path(quad.seed, {0x6c756d70ULL, j});
        const LevelSetSample sample = rc.level_sampler(zs[j], quad.n_level, rng);
        const auto pairs = detail::draw_pairs(quad.n_pairs, sample.points.size(), rng);
        // evaluate only the points that appear in a pair, once each
        std::vector<int> used(sample.points.size(), -1);
        std::vector<std::vector<double>> grids;
        for (const auto& [a, b] : pairs) {
            for (std::size_t idx : {a, b}) {
                if (used[idx] < 0) {
                    used[idx] = static_cast<int>(grids.size());
                    grids.push_back(access.forward_on_grid(sample.points[idx], access.l1_grid));
                }
            }
        }
        std::vector<double> dists;
        dists.reserve(pairs.size());
        for (const auto& [a, b] : pairs) {
            const auto& ga = grids[used[a]];
            const auto& gb = grids[used[b]];
            double s = 0.0;
            for (std::size_t i = 0; i < ga.size(); ++i) s += std::abs(ga[i] - gb[i]);
            dists.push_back(s * cell_vol);
        }
        total += mean(dists);
        if (dists.size() >= 2)
            var_acc += sample_variance(dists) / static_cast<double>(dists.size());
    }
    LossEstimate est;
    est.m = quad.n_z * quad.n_pairs;
    est.value = total / static_cast<double>(quad.n_z);
    est.std_error = std::sqrt(var_acc) / static_cast<double>(quad.n_z);
    return est;
}

/// Density-side loss evaluated at the conditional-mean effective density: per
/// level, p_L(z, .) is the average of forward densities from one batch of
/// level-set points, and the reported value is the level-averaged L1 distance
/// of an independent batch to it. Bounds the infimum-based loss from both
/// sides together with the differential variant.
inline LossEstimate loss_lump_constructive(const ReactionCoordinate& rc,
                                           const TransitionAccess& access,
                                           const LossQuadConfig& quad) {
    quad.validate();
    detail::require_sampler(rc);
    const auto zs = detail::midpoints(rc.range, quad.n_z);
    const GridSpec& grid = access.l1_grid;
    const std::size_t nodes = static_cast<std::size_t>(grid.total_nodes());
    double total = 0.0;
    double var_acc = 0.0;
    for (std::size_t j = 0; j < zs.size(); ++j) {
        RngStream rng = RngStream::from_path(quad.seed, {0x636f6e73ULL, j});
        const LevelSetSample build = rc.level_sampler(zs[j], quad.n_level, rng);
        std::vector<double> p_l(nodes, 0.0);
        for (const Vec& p : build.points) {
            const std::vector<double> g = access.forward_on_grid(p, grid);
            for (std::size_t i = 0; i < nodes; ++i) p_l[i] += g[i];
        }
        for (double& v : p_l) v /= static_cast<double>(build.points.size());

        const LevelSetSample eval = rc.level_sampler(zs[j], quad.n_level, rng);
        std::vector<double> dists;
        dists.reserve(eval.points.size());
        for (const Vec& p : eval.points) {
            const std::vector<double> g = access.forward_on_grid(p, grid);
            double s = 0.0;
            for (std::size_t i = 0; i < nodes; ++i) s += std::abs(g[i] - p_l[i]);
            dists.push_back(s * grid.cell_volume());
        }
        total += mean(dists);
        if (dists.size() >= 2)
            var_acc += sample_variance(dists) / static_cast<double>(dists.size());
    }
    LossEstimate est;
    est.m = quad.n_z * quad.n_level;
    est.value = total / static_cast<double>(quad.n_z);
    est.std_error = std::sqrt(var_acc) / static_cast<double>(quad.n_z);
    return est;
}

/// Observable-side counterpart of the constructive loss: per level, the
/// effective observable is the average of ratio observables over a build
/// batch, and distances are stationary-weighted L1 norms estimated with
/// m_outer stationary samples.
inline LossEstimate loss_deflat_constructive(const ReactionCoordinate& rc,
                                             const TransitionAccess& access,
                                             const StationarySampler& sampler,
                                             const LossQuadConfig& quad) {
    quad.validate();
    detail::require_sampler(rc);
    const std::vector<Vec> xs = sampler(quad.m_outer, derive_seed(quad.seed, {0x64636f6eULL}));
    std::vector<std::function<double(const Vec&)>> fw;
    fw.reserve(xs.size());
    for (const Vec& x : xs) fw.push_back(access.forward(x));
    auto ratio_at = [&](std::size_t k, const Vec& y) { return fw[k](y) / access.stationary(y); };

    const auto zs = detail::midpoints(rc.range, quad.n_z);
    double total = 0.0;
    double var_acc = 0.0;
    for (std::size_t j = 0; j < zs.size(); ++j) {
        RngStream rng = RngStream::from_path(quad.seed, {0x64636f32ULL, j});
        const LevelSetSample build = rc.level_sampler(zs[j], quad.n_level, rng);
        std::vector<double> p_d(xs.size(), 0.0); // effective observable at each x sample
        for (const Vec& y : build.points)
            for (std::size_t k = 0; k < xs.size(); ++k) p_d[k] += ratio_at(k, y);
        for (double& v : p_d) v /= static_cast<double>(build.points.size());

        const LevelSetSample eval = rc.level_sampler(zs[j], quad.n_level, rng);
        std::vector<double> dists;
        dists.reserve(eval.points.size());
        for (const Vec& y : eval.points) {
            double s = 0.0;
            for (std::size_t k = 0; k < xs.size(); ++k) s += std::abs(ratio_at(k, y) - p_d[k]);
            dists.push_back(s / static_cast<double>(xs.size()));
        }
        total += mean(dists);
        if (dists.size() >= 2)
            var_acc += sample_variance(dists) / static_cast<double>(dists.size());
    }
    LossEstimate est;
    est.m = quad.n_z * quad.n_level;
    est.value = total / static_cast<double>(quad.n_z);
    est.std_error = std::sqrt(var_acc) / static_cast<double>(quad.n_z);
    return est;
}

struct VarianceReport {
    double variance = 0.0;
    double mean_f = 0.0;
    double relative = 0.0; // Var[f] / E[f]
};

/// Unbiased sample variance of the retained per-sample integrand values.
inline VarianceReport variance_of_f(const LossEstimate& est) {
    if (est.per_sample_f.size() < 2)
        throw numeric_error("variance_of_f: needs at least 2 retained samples");
    VarianceReport r;
    r.mean_f = mean(est.per_sample_f);
    r.variance = sample_variance(est.per_sample_f);
    r.relative = r.mean_f != 0.0 ? r.variance / r.mean_f : 0.0;
    return r;
}

/// Variance of the integrand with the inner sampling noise removed: the two
/// estimates must share start points (same seed) but use independent level
/// draws (different inner_stream); the cross-covariance of the per-sample
/// values is then an unbiased estimate of the variance of the true integrand.
inline VarianceReport paired_variance_of_f(const LossEstimate& a, const LossEstimate& b) {
    if (a.per_sample_f.size() != b.per_sample_f.size() || a.per_sample_f.size() < 2)
        throw numeric_error("paired_variance_of_f: mismatched or insufficient samples");
    const std::size_t m = a.per_sample_f.size();
    const double ma = mean(a.per_sample_f), mb = mean(b.per_sample_f);
    double cov = 0.0;
    for (std::size_t k = 0; k < m; ++k)
        cov += (a.per_sample_f[k] - ma) * (b.per_sample_f[k] - mb);
    cov /= static_cast<double>(m - 1);
    VarianceReport r;
    r.mean_f = 0.5 * (ma + mb);
    r.variance = cov;
    r.relative = r.mean_f != 0.0 ? r.variance / r.mean_f : 0.0;
    return r;
}

struct McErrorPoint {
    std::size_t m = 0;
    double rel_expected_error = 0.0; // E |I - I_M| / I
    double var_over_sqrt_m = 0.0;    // Var[f] / (sqrt(M) I)
    double std_over_sqrt_m = 0.0;    // Std[f] / (sqrt(M) I)
};

struct McErrorCurve {
    double reference = 0.0;
    double reference_std_error = 0.0;
    std::size_t reference_m = 0;
    std::vector<McErrorPoint> points;
    // trial_errors[i][t]: relative error of trial t at m_list[i]; kept so runs
    // with a shared seed can be compared pairwise across kernels.
    std::vector<std::vector<double>> trial_errors;
};

/// Relative expected Monte Carlo error of the outer integral as a function of
/// the sample count. The reference value is itself a Monte Carlo estimate over
/// reference_factor * max(m_list) samples; its residual error is reported.
inline McErrorCurve mc_error_curve(const ReactionCoordinate& rc, const TransitionAccess& access,
                                   const StationarySampler& sampler,
                                   const std::vector<std::size_t>& m_list, std::size_t n_trials,
                                   std::uint64_t seed, LossQuadConfig inner,
                                   std::size_t reference_factor = 100) {
    require(!m_list.empty() && n_trials >= 1, "mc_error_curve: empty m_list or no trials");
    const std::size_t m_max = *std::max_element(m_list.begin(), m_list.end());

    auto run_estimate = [&](std::size_t m, std::uint64_t run_tag) {
        LossQuadConfig q = inner;
        q.m_outer = m;
        q.seed = derive_seed(seed, {run_tag});
        return loss_deflat(rc, access, sampler, q);
    };

    McErrorCurve curve;
    const LossEstimate ref = run_estimate(reference_factor * m_max, 0x72656665ULL);
    curve.reference = ref.value;
    curve.reference_std_error = ref.std_error;
    curve.reference_m = ref.m;
    const double ref_var = sample_variance(ref.per_sample_f);

    curve.points.resize(m_list.size());
    curve.trial_errors.assign(m_list.size(), {});
    for (std::size_t i = 0; i < m_list.size(); ++i) {
        const std::size_t m = m_list[i];
        std::vector<double>& errs = curve.trial_errors[i];
        errs.reserve(n_trials);
        for (std::size_t t = 0; t < n_trials; ++t) {
            const LossEstimate est = run_estimate(m, 0x10000ULL + i * 4096 + t + 1);
            const double diff = std::abs(curve.reference - est.value);
            if (diff == 0.0) {
                errs.push_back(0.0);
            } else if (curve.reference == 0.0) {
                throw numeric_error("mc_error_curve: zero reference with nonzero trials");
            } else {
                errs.push_back(diff / curve.reference);
            }
        }
        McErrorPoint& pt = curve.points[i];
        pt.m = m;
        pt.rel_expected_error = mean(errs);
        if (curve.reference > 0.0) {
            pt.var_over_sqrt_m = ref_var / (std::sqrt(static_cast<double>(m)) * curve.reference);
            pt.std_over_sqrt_m =
                std::sqrt(ref_var) / (std::sqrt(static_cast<double>(m)) * curve.reference);
        }
    }
    return curve;
}

inline std::string loss_csv_header() {
    return "rc_id,param,sigma,tau,M,loss,std_error,var_f,rel_var_f,seed";
}

inline std::string loss_csv_row(const std::string& rc_id, double param, const std::string& sigma,
                                double tau, std::size_t m, const LossEstimate& est,
                                std::uint64_t seed) {
    double var_f = 0.0, rel = 0.0;
    if (est.per_sample_f.size() >= 2) {
        const VarianceReport vr = variance_of_f(est);
        var_f = vr.variance;
        rel = vr.relative;
    }
    return rc_id + "," + fmt_g(param) + "," + sigma + "," + fmt_g(tau) + "," + std::to_string(m) +
           "," + fmt_g(est.value) + "," + fmt_g(est.std_error) + "," + fmt_g(var_f) + "," +
           fmt_g(rel) + "," + std::to_string(seed);
}

} // namespace rcq
