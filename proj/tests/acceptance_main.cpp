// Acceptance suite: one check per release criterion, each printing a single
// PASS/FAIL line. Run with no arguments for all criteria or pass criterion
// numbers. The exit code is the number of failures.

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rcq/experiments.hpp"
#include "rcq/loss.hpp"
#include "rcq/oracle.hpp"
#include "rcq/stats.hpp"

using namespace rcq;
using namespace rcq::experiments;

namespace {

struct CriterionResult {
    bool pass = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

ExperimentConfig make_config(const std::string& experiment, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.experiment = experiment;
    cfg.seed = seed;
    cfg.output_dir = "acceptance_out/" + experiment;
    return cfg;
}

OutputSink make_sink(const ExperimentConfig& cfg) {
    OutputSink sink;
    sink.dir = cfg.output_dir;
    return sink;
}

// -------------------------------------------------------------------------
// 1. effective-kernel distance: decay rate, monotonicity, dimension effect
// -------------------------------------------------------------------------
CriterionResult criterion_1() {
    CriterionResult r;
    const ExperimentConfig cfg = make_config("lumpability-decay", 1);
    const auto s = run_lumpability_decay(cfg, make_sink(cfg));

    const DecayCurve* n2 = nullptr;
    const DecayCurve* n3 = nullptr;
    for (const auto& c : s.curves) {
        r.expect(c.strictly_decreasing, "distance not strictly decreasing at n=" +
                                            std::to_string(c.n) + " tau=" + fmt_g(c.tau));
        if (c.tau == 1.0 && c.n == 2) n2 = &c;
        if (c.tau == 1.0 && c.n == 3) n3 = &c;
    }
    r.expect(n2 != nullptr && n3 != nullptr, "missing curves");
    if (n2 && n3) {
        const double target = -0.5;
        r.note("slope(n=2,tau=1)=" + fmt_g(n2->fitted_slope, 4));
        r.expect(std::abs(n2->fitted_slope - target) <= 0.2 * std::abs(target),
                 "slope " + fmt_g(n2->fitted_slope, 4) + " not within 20% of -0.5");
        double worst_ratio = 1.0;
        for (std::size_t i = 0; i < n2->sigmas.size(); ++i) {
            const double ratio = n3->distances[i] / n2->distances[i];
            worst_ratio = std::max({worst_ratio, ratio, 1.0 / ratio});
        }
        r.note("max n3/n2 ratio=" + fmt_g(worst_ratio, 3));
        r.expect(worst_ratio <= 2.0, "n=3 curve deviates from n=2 by more than a factor 2");
    }
    return r;
}

// -------------------------------------------------------------------------
// 2. loss landscape of the linear coordinate family
// -------------------------------------------------------------------------
CriterionResult criterion_2() {
    CriterionResult r;
    const ExperimentConfig cfg = make_config("loss-landscape", 2);
    const auto s = run_loss_landscape(cfg, make_sink(cfg));

    const double grid_tol = 1e-9;
    for (const auto& curve : s.curves) {
        const std::string tag = "sigma=" + curve.sigma.str();
        if (curve.sigma.is_infinite() || curve.sigma.value() >= 2.0) {
            r.expect(std::abs(curve.argmin_alpha) < grid_tol,
                     tag + ": argmin at " + fmt_g(curve.argmin_alpha, 4) + " not 0");
        } else { // isotropic case
            r.expect(std::abs(std::abs(curve.argmin_alpha) - pi / 4.0) < grid_tol,
                     tag + ": argmin at " + fmt_g(curve.argmin_alpha, 4) + " not +-pi/4");
        }
        r.expect(std::abs(std::abs(curve.argmax_alpha) - pi / 2.0) < grid_tol,
                 tag + ": argmax at " + fmt_g(curve.argmax_alpha, 4) + " not +-pi/2");
        if (curve.sigma.is_infinite()) {
            for (const auto& pt : curve.points) {
                if (std::abs(pt.alpha) < grid_tol) {
                    r.note("loss at optimum (sigma=inf): " + fmt_g(pt.estimate.value, 3) + " +- " +
                           fmt_g(pt.estimate.std_error, 3));
                    r.expect(pt.estimate.value <= 2.0 * pt.estimate.std_error + 1e-15,
                             "optimal-coordinate loss not zero within 2 std errors");
                }
            }
        }
    }
    return r;
}

// -------------------------------------------------------------------------
// 3. Monte Carlo error rate and kernel ordering
// -------------------------------------------------------------------------
CriterionResult criterion_3() {
    CriterionResult r;
    const ExperimentConfig cfg = make_config("mc-error", 3);
    const auto s = run_mc_error(cfg, make_sink(cfg));

    int idx_fin = -1, idx_inf = -1;
    for (std::size_t i = 0; i < s.sigmas.size(); ++i) {
        r.note("slope(sigma=" + s.sigmas[i].str() + ")=" + fmt_g(s.slopes[i], 4));
        r.expect(std::abs(s.slopes[i] + 0.5) <= 0.1,
                 "slope " + fmt_g(s.slopes[i], 4) + " outside -0.5 +- 0.1");
        if (s.sigmas[i].is_infinite())
            idx_inf = static_cast<int>(i);
        else
            idx_fin = static_cast<int>(i);
    }
    r.expect(idx_fin >= 0 && idx_inf >= 0, "need one finite and one infinite kernel");
    if (idx_fin >= 0 && idx_inf >= 0) {
        const auto& fin = s.curves[idx_fin];
        const auto& inf = s.curves[idx_inf];
        // trials pair up across kernels at each fixed M (shared seeds); the
        // sign test pools the independent paired comparisons over the M grid
        int wins = 0, n = 0;
        for (std::size_t mi = 0; mi < fin.points.size(); ++mi) {
            r.expect(inf.points[mi].rel_expected_error < fin.points[mi].rel_expected_error,
                     "mean error ordering fails at M=" + std::to_string(fin.points[mi].m));
            for (std::size_t t = 0; t < fin.trial_errors[mi].size(); ++t) {
                wins += inf.trial_errors[mi][t] < fin.trial_errors[mi][t] ? 1 : 0;
                ++n;
            }
        }
        const double p = sign_test_p_value(wins, n);
        r.note("paired sign test: wins=" + std::to_string(wins) + "/" + std::to_string(n) +
               " p=" + fmt_g(p, 3));
        r.expect(p < 0.05, "pooled sign test p=" + fmt_g(p, 3) + " not below 0.05");
    }
    return r;
}

// -------------------------------------------------------------------------
// 4. integrand constancy and variance ordering
// -------------------------------------------------------------------------
CriterionResult criterion_4() {
    CriterionResult r;
    const ExperimentConfig cfg = make_config("variance-study", 4);
    const auto s = run_variance_study(cfg, make_sink(cfg));

    r.note("constancy cv=" + fmt_g(s.constancy_cv, 4));
    r.expect(s.constancy_cv < 0.05, "coefficient of variation across the fast coordinate >= 5%");

    std::map<std::string, std::vector<std::pair<double, double>>> vars; // rc -> (sigma_key, var)
    auto sigma_key = [](const SigmaParam& s) {
        return s.is_infinite() ? 1e18 : s.value();
    };
    for (const auto& pt : s.points)
        vars[pt.rc_id].push_back({sigma_key(pt.sigma), pt.report.variance});

    // strict decrease across the finite scales, plus convergence to the limit
    // value: at sigma = 4 the kernel is already within ~3e-4 of the limit
    // kernel, so strictness there is below any Monte Carlo resolution and the
    // figure's statement is convergence
    for (auto& [rc_id, vec] : vars) {
        std::sort(vec.begin(), vec.end());
        for (std::size_t i = 0; i + 2 < vec.size(); ++i)
            r.expect(vec[i + 1].second < vec[i].second,
                     "Var[f] not decreasing for " + rc_id + " between sigma=" +
                         fmt_g(vec[i].first) + " and sigma=" + fmt_g(vec[i + 1].first));
        const double last_finite = vec[vec.size() - 2].second;
        const double limit = vec.back().second;
        r.expect(std::abs(last_finite - limit) <= 0.05 * limit,
                 "Var[f] for " + rc_id + " has not converged to the limit value");
    }
    r.expect(vars.count("sum2") == 1 && vars.count("sum3") == 1, "missing coordinate families");
    if (vars.count("sum2") && vars.count("sum3")) {
        // the dimension comparison concerns the time-scale separated regime;
        // at sigma = 1 the fast coordinates are as slow as the slow one and
        // the ordering genuinely reverses
        for (std::size_t i = 0; i < vars["sum2"].size(); ++i) {
            if (vars["sum2"][i].first < 2.0) continue;
            r.expect(vars["sum3"][i].second < vars["sum2"][i].second,
                     "Var[f] for the three-dimensional coordinate not below the two-dimensional "
                     "one at sigma=" +
                         fmt_g(std::min(vars["sum2"][i].first, 1e6)));
        }
        r.note("Var[f] sum2 @sigma=4: " + fmt_g(vars["sum2"][2].second, 3) +
               ", sum3: " + fmt_g(vars["sum3"][2].second, 3));
    }
    return r;
}

// -------------------------------------------------------------------------
// 5. circular system: angle beats radius, with the right trends
// -------------------------------------------------------------------------
CriterionResult criterion_5() {
    CriterionResult r;
    const ExperimentConfig cfg = make_config("circular-loss", 5);
    const auto s = run_circular_loss(cfg, make_sink(cfg));

    for (const auto& pt : s.points) {
        const double gap = pt.radius.value - pt.phi.value;
        const double se =
            std::sqrt(pt.phi.std_error * pt.phi.std_error + pt.radius.std_error * pt.radius.std_error);
        r.note("sigma=" + fmt_g(pt.sigma_radial) + ": phi=" + fmt_g(pt.phi.value, 3) + " r=" +
               fmt_g(pt.radius.value, 3) + " gap/se=" + fmt_g(se > 0 ? gap / se : 1e9, 2));
        r.expect(gap >= 3.0 * se, "angle loss does not beat radius loss by 3 combined std errors "
                                  "at sigma=" + fmt_g(pt.sigma_radial));
    }
    for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
        r.expect(s.points[i + 1].phi.value <= s.points[i].phi.value,
                 "angle loss increases between sigma=" + fmt_g(s.points[i].sigma_radial) +
                     " and sigma=" + fmt_g(s.points[i + 1].sigma_radial));
        r.expect(s.points[i + 1].radius.value >= s.points[i].radius.value,
                 "radius loss decreases between sigma=" + fmt_g(s.points[i].sigma_radial) +
                     " and sigma=" + fmt_g(s.points[i + 1].sigma_radial));
    }
    return r;
}

// -------------------------------------------------------------------------
// 6. transfer-operator spectrum of the circular system
// -------------------------------------------------------------------------
CriterionResult criterion_6() {
    CriterionResult r;
    const ExperimentConfig cfg = make_config("spectrum", 6);
    const auto s = run_spectrum(cfg, make_sink(cfg));

    const SpectrumResult* stiff = nullptr;
    const SpectrumResult* soft = nullptr;
    for (const auto& res : s.results) {
        if (res.sigma_radial == 100.0) stiff = &res;
        if (res.sigma_radial == 1.0) soft = &res;
        r.note("sigma=" + fmt_g(res.sigma_radial) + ": cluster_stat=" +
               fmt_g(res.cluster_statistic, 3));
    }
    r.expect(stiff && soft, "missing sigma values");
    if (stiff && soft) {
        r.expect(stiff->cluster_statistic < 0.5,
                 "no five-state cluster at sigma=100 (stat=" +
                     fmt_g(stiff->cluster_statistic, 3) + ")");
        r.expect(soft->cluster_statistic >= 0.5,
                 "unexpected spectral gap at sigma=1 (stat=" + fmt_g(soft->cluster_statistic, 3) +
                     ")");
        r.expect(stiff->gaps.largest_gap_index == 4,
                 "largest gap not after the fifth eigenvalue (index " +
                     std::to_string(stiff->gaps.largest_gap_index) + ")");
        r.expect(std::abs(stiff->spectrum.eigenvalues[0] - 1.0) < 1e-8, "top eigenvalue not 1");

        // sign structure: the four slow eigenvectors are near-constant inside
        // each angular well and separate wells from each other. Statistics are
        // weighted by the stationary cell masses: the similarity transform
        // amplifies eigenvector entries at negligible-mass cells, which say
        // nothing about the metastable structure.
        for (int vi = 1; vi <= 4 && stiff; ++vi) {
            std::vector<double> w_sum(5, 0.0), w_mean(5, 0.0), w_m2(5, 0.0);
            std::vector<int> w_count(5, 0);
            for (std::size_t c = 0; c < stiff->centers.size(); ++c) {
                const Vec& x = stiff->centers[c];
                const double rad = std::hypot(x[0], x[1]);
                if (std::abs(rad - 1.0) > 0.15) continue;
                const double phi = std::atan2(x[1], x[0]);
                for (int w = 0; w < 5; ++w) {
                    // angular minima of cos(5 phi) sit at pi/5 + 2 pi w / 5
                    const double center = wrap_angle(pi / 5.0 + 2.0 * pi * w / 5.0);
                    double d = std::abs(phi - center);
                    d = std::min(d, two_pi - d);
                    if (d >= pi / 10.0) continue;
                    const double weight = stiff->weights(static_cast<int>(c));
                    const double v = stiff->spectrum.eigenvectors(static_cast<int>(c), vi);
                    w_sum[w] += weight;
                    const double delta = v - w_mean[w];
                    w_mean[w] += weight / w_sum[w] * delta;
                    w_m2[w] += weight * delta * (v - w_mean[w]);
                    ++w_count[w];
                }
            }
            bool all_wells = true;
            double max_within = 0.0, lo = 1e300, hi = -1e300;
            bool has_pos = false, has_neg = false;
            for (int w = 0; w < 5; ++w) {
                if (w_count[w] < 3 || w_sum[w] <= 0.0) {
                    all_wells = false;
                    continue;
                }
                max_within = std::max(max_within, std::sqrt(w_m2[w] / w_sum[w]));
                lo = std::min(lo, w_mean[w]);
                hi = std::max(hi, w_mean[w]);
                (w_mean[w] > 0 ? has_pos : has_neg) = true;
            }
            r.expect(all_wells, "well partition failed for eigenvector " + std::to_string(vi));
            if (all_wells) {
                const double spread = hi - lo;
                r.expect(max_within < 0.2 * spread,
                         "eigenvector " + std::to_string(vi) + " not well-constant (within=" +
                             fmt_g(max_within, 3) + ", spread=" + fmt_g(spread, 3) + ")");
                r.expect(has_pos && has_neg,
                         "eigenvector " + std::to_string(vi) + " does not change sign");
            }
        }
    }
    return r;
}

// -------------------------------------------------------------------------
// 7. exact finite-chain theory suite
// -------------------------------------------------------------------------
CriterionResult criterion_7() {
    CriterionResult r;
    const ExperimentConfig cfg = make_config("oracle-suite", 7);
    const auto s = run_oracle_suite(cfg, make_sink(cfg));
    r.note("chains=" + std::to_string(s.n_chains) + " max_equiv=" +
           fmt_g(s.max_equivalence_diff, 3) + " sweep_slope=" + fmt_g(s.sweep_slope, 3));
    r.expect(s.n_chains >= 100, "fewer than 100 chains");
    r.expect(s.max_equivalence_diff <= 1e-12, "constructive loss equivalence violated");
    r.expect(s.max_transform_diff <= 1e-12, "transform construction differs");
    r.expect(s.sandwich_violations == 0,
             std::to_string(s.sandwich_violations) + " sandwich violations");
    r.expect(s.block_identity_diff <= 1e-12, "variance identity violated on the lumpable chain");
    r.expect(std::abs(s.sweep_slope - 1.0) <= 0.2,
             "variance-mismatch slope " + fmt_g(s.sweep_slope, 3) + " outside 1 +- 0.2");
    return r;
}

// -------------------------------------------------------------------------
// 8. continuous estimators against the exact stand-in
// -------------------------------------------------------------------------
CriterionResult criterion_8() {
    CriterionResult r;
    // documented budget: 16-cell axis partition, n_z=16 (grid exact), the
    // level and pair counts below, M=1024 outer samples
    const TorusKernelSpec spec{2, 1.0, SigmaParam::finite(2.0)};
    const DiscreteChain chain = discretize_torus_kernel(spec, 16);
    const ExactLosses exact = exact_losses(chain);
    const TransitionAccess acc = make_chain_access(chain, 32);
    const ReactionCoordinate rc = linear_rc_alpha(0.0);
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));

    LossQuadConfig quad;
    quad.n_z = 16;
    quad.n_level = 32;
    quad.n_pairs = 48;
    quad.m_outer = 1024;
    quad.seed = 8;
    const LossEstimate deflat = loss_deflat(rc, acc, sampler, quad);
    const double rel = std::abs(deflat.value - exact.deflat_differential) / exact.deflat_differential;
    r.note("deflat rel err=" + fmt_g(rel, 3) + " (exact " + fmt_g(exact.deflat_differential, 4) +
           ", est " + fmt_g(deflat.value, 4) + ")");
    r.expect(rel < 0.02, "observable-side loss off by " + fmt_g(100 * rel, 2) + "%");

    LossQuadConfig lq = quad;
    lq.n_pairs = 64;
    lq.n_level = 24;
    const LossEstimate lump = loss_lump_differential(rc, acc, lq);
    const double rel_l = std::abs(lump.value - exact.lump_differential) / exact.lump_differential;
    r.note("lump rel err=" + fmt_g(rel_l, 3));
    r.expect(rel_l < 0.02, "density-side loss off by " + fmt_g(100 * rel_l, 2) + "%");

    // outer Monte Carlo scaling against the exact value
    std::vector<std::size_t> m_list = {8, 32, 128};
    std::vector<double> xs, ys;
    for (std::size_t m : m_list) {
        LossQuadConfig q = quad;
        q.m_outer = m;
        std::vector<double> errs;
        for (std::uint64_t t = 0; t < 40; ++t) {
            q.seed = derive_seed(8, {0x38ULL, m, t});
            const LossEstimate est = loss_deflat(rc, acc, sampler, q);
            errs.push_back(std::abs(est.value - exact.deflat_differential));
        }
        xs.push_back(static_cast<double>(m));
        ys.push_back(mean(errs));
    }
    const double slope = fit_loglog(xs, ys).slope;
    r.note("outer-MC slope=" + fmt_g(slope, 3));
    r.expect(std::abs(slope + 0.5) <= 0.1, "outer-MC slope " + fmt_g(slope, 3) +
                                               " outside -0.5 +- 0.1");
    return r;
}

} // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<std::string, std::function<CriterionResult()>>> criteria = {
        {1, {"effective-kernel distance decay", criterion_1}},
        {2, {"loss landscape of the linear family", criterion_2}},
        {3, {"Monte Carlo error rate", criterion_3}},
        {4, {"integrand variance study", criterion_4}},
        {5, {"circular system loss ordering", criterion_5}},
        {6, {"transfer-operator spectrum", criterion_6}},
        {7, {"exact chain theory suite", criterion_7}},
        {8, {"estimator consistency vs exact sums", criterion_8}},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    if (selected.empty())
        for (const auto& [k, _] : criteria) selected.insert(k);

    int failures = 0;
    for (int k : selected) {
        const auto it = criteria.find(k);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << k << "\n";
            ++failures;
            continue;
        }
        CriterionResult res;
        try {
            res = it->second.second();
        } catch (const std::exception& e) {
            res.pass = false;
            res.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %d (%s)%s%s\n", res.pass ? "PASS" : "FAIL", k,
                    it->second.first.c_str(), res.detail.empty() ? "" : ": ",
                    res.detail.c_str());
        std::fflush(stdout);
        if (!res.pass) ++failures;
    }
    return failures;
}
