#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rcq/common.hpp"
#include "rcq/csv.hpp"
#include "rcq/gibbs.hpp"
#include "rcq/grid.hpp"
#include "rcq/parallel.hpp"
#include "rcq/potential.hpp"
#include "rcq/sde.hpp"

namespace rcq {

struct UlamOptions {
    int grid_k = 48;
    std::size_t samples_per_cell = 50;
    bool periodic = false;           // wrap endpoints back into the box
    double mass_floor_rel = 1e-10;   // cells below this fraction of the peak mass are excluded
    int threads = 1;
};

// Grid discretization of the density propagator at one lag time. Rows index
// start cells, columns end cells; excluded cells carry negligible stationary
// mass or produced no usable endpoints.
struct UlamModel {
    Box box;
    int grid_k = 0;
    int dim = 0;
    double tau = 0.0;
    std::vector<std::int64_t> kept_cells;  // compact index -> full-grid flat id
    std::vector<int> compact_of;           // full-grid flat id -> compact index or -1
    Eigen::MatrixXd counts;                // weighted endpoint counts before symmetrization
    Eigen::MatrixXd matrix;                // row-stochastic, reversible w.r.t. stationary_weights
    Eigen::VectorXd stationary_weights;
    std::size_t escaped = 0;               // endpoints outside the box, dropped
    std::size_t dropped_rows = 0;          // started cells whose bursts all escaped

    Vec cell_center(int compact) const {
        GridSpec g{box, grid_k};
        std::int64_t flat = kept_cells[compact];
        Vec x(dim);
        for (int a = dim - 1; a >= 0; --a) {
            x[a] = g.node_coord(a, static_cast<int>(flat % grid_k));
            flat /= grid_k;
        }
        return x;
    }
};

/// Estimates the cell-to-cell transition matrix by launching bursts from every
/// retained cell. Start points are uniform in the cell, reweighted by the
/// stationary density so rows approximate the stationary-conditioned operator.
/// The estimated flow is symmetrized before row normalization, which enforces
/// reversibility exactly (the underlying dynamics is reversible; sampling
/// noise is what breaks it) and gives a real spectrum with lambda_0 = 1.
inline UlamModel ulam_estimate(const Potential& pot, const SdeConfig& cfg, const UlamOptions& opts,
                               std::uint64_t seed) {
    require(opts.grid_k >= 4, "ulam_estimate: grid_k >= 4 required");
    require(opts.samples_per_cell >= 10, "ulam_estimate: samples_per_cell >= 10 required");
    const int d = pot.dim();
    std::int64_t n_cells = 1;
    for (int a = 0; a < d; ++a) n_cells *= opts.grid_k;
    if (n_cells > 200000) throw numeric_error("ulam_estimate: grid too large");
    const GridSpec grid{pot.domain_box, opts.grid_k};

    // stationary mass per cell from a per-cell 2^d-point quadrature
    const GibbsDensity gibbs(pot, cfg.beta);
    std::vector<double> mass(n_cells, 0.0);
    {
        std::vector<int> idx(d, 0);
        Vec x(d);
        for (std::int64_t flat = 0; flat < n_cells; ++flat) {
            double m = 0.0;
            for (int corner = 0; corner < (1 << d); ++corner) {
                for (int a = 0; a < d; ++a) {
                    const double h = (grid.box.hi[a] - grid.box.lo[a]) / opts.grid_k;
                    const double off = (corner >> a) & 1 ? 0.75 : 0.25;
                    x[a] = grid.box.lo[a] + (idx[a] + off) * h;
                }
                m += gibbs(x);
            }
            mass[flat] = m / (1 << d);
            for (int a = d - 1; a >= 0; --a) {
                if (++idx[a] < opts.grid_k) break;
                idx[a] = 0;
            }
        }
    }
    const double peak = *std::max_element(mass.begin(), mass.end());

    UlamModel model;
    model.box = pot.domain_box;
    model.grid_k = opts.grid_k;
    model.dim = d;
    model.tau = cfg.tau;
    model.compact_of.assign(n_cells, -1);
    for (std::int64_t flat = 0; flat < n_cells; ++flat) {
        if (mass[flat] >= opts.mass_floor_rel * peak) {
            model.compact_of[flat] = static_cast<int>(model.kept_cells.size());
            model.kept_cells.push_back(flat);
        }
    }
    const int n = static_cast<int>(model.kept_cells.size());
    require(n >= 2, "ulam_estimate: no cells retained; check the potential and mass floor");

    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
    std::vector<std::size_t> escapes(n, 0);
    std::vector<std::string> failures(n);
    parallel_for(n, opts.threads, [&](std::size_t ci) {
        try {
            const std::int64_t flat = model.kept_cells[ci];
            RngStream rng = RngStream::from_path(seed, {0x756c616dULL, static_cast<std::uint64_t>(flat)});
            // cell bounds
            Vec lo(d), hi(d);
            std::int64_t rem = flat;
            for (int a = d - 1; a >= 0; --a) {
                const double h = (grid.box.hi[a] - grid.box.lo[a]) / opts.grid_k;
                const int ia = static_cast<int>(rem % opts.grid_k);
                rem /= opts.grid_k;
                lo[a] = grid.box.lo[a] + ia * h;
                hi[a] = lo[a] + h;
            }
            // uniform in-cell starts, weights proportional to the stationary density
            std::vector<Vec> starts(opts.samples_per_cell, Vec(d));
            std::vector<double> w(opts.samples_per_cell);
            double wsum = 0.0;
            for (std::size_t s = 0; s < opts.samples_per_cell; ++s) {
                for (int a = 0; a < d; ++a) starts[s][a] = rng.uniform(lo[a], hi[a]);
                w[s] = gibbs(starts[s]);
                wsum += w[s];
            }
            if (wsum <= 0.0) return;
            SdeConfig burst_cfg = cfg;
            for (std::size_t s = 0; s < opts.samples_per_cell; ++s) {
                Vec y = advance_lag(starts[s], pot, burst_cfg, rng);
                if (opts.periodic) {
                    for (int a = 0; a < d; ++a) {
                        const double span = grid.box.hi[a] - grid.box.lo[a];
                        y[a] -= span * std::floor((y[a] - grid.box.lo[a]) / span);
                    }
                }
                const std::int64_t cy = grid_cell_of(grid, y);
                const int cj = cy >= 0 ? model.compact_of[cy] : -1;
                if (cj < 0) {
                    ++escapes[ci];
                    continue;
                }
                counts(static_cast<int>(ci), cj) += w[s] / wsum;
            }
        } catch (const std::exception& e) {
            failures[ci] = e.what();
        }
    });
    for (int ci = 0; ci < n; ++ci)
        if (!failures[ci].empty())
            throw numeric_error("ulam_estimate: cell " + std::to_string(ci) + ": " + failures[ci]);
    for (std::size_t e : escapes) model.escaped += e;

    // drop rows that kept no endpoints, then renormalize
    std::vector<int> keep;
    for (int i = 0; i < n; ++i) {
        if (counts.row(i).sum() > 0.0)
            keep.push_back(i);
        else
            ++model.dropped_rows;
    }
    if (static_cast<int>(keep.size()) < n) {
        std::vector<std::int64_t> cells2;
        Eigen::MatrixXd c2(keep.size(), keep.size());
        for (std::size_t a = 0; a < keep.size(); ++a) {
            cells2.push_back(model.kept_cells[keep[a]]);
            for (std::size_t b = 0; b < keep.size(); ++b) c2(a, b) = counts(keep[a], keep[b]);
        }
        model.kept_cells = std::move(cells2);
        counts = std::move(c2);
        model.compact_of.assign(n_cells, -1);
        for (std::size_t i = 0; i < model.kept_cells.size(); ++i)
            model.compact_of[model.kept_cells[i]] = static_cast<int>(i);
    }
    const int nk = static_cast<int>(model.kept_cells.size());
    model.counts = counts;

    // stationary-weighted flow, symmetrized, then row-normalized
    Eigen::VectorXd pi_cells(nk);
    for (int i = 0; i < nk; ++i) pi_cells(i) = mass[model.kept_cells[i]];
    pi_cells /= pi_cells.sum();
    Eigen::MatrixXd p_hat = counts;
    for (int i = 0; i < nk; ++i) p_hat.row(i) /= p_hat.row(i).sum();
    Eigen::MatrixXd flow = pi_cells.asDiagonal() * p_hat;
    flow = 0.5 * (flow + flow.transpose().eval());
    const Eigen::VectorXd rowsum = flow.rowwise().sum();
    model.matrix = rowsum.cwiseInverse().asDiagonal() * flow;
    model.stationary_weights = rowsum / rowsum.sum();
    return model;
}

struct Spectrum {
    std::vector<double> eigenvalues;  // descending, eigenvalues[0] = 1
    Eigen::MatrixXd eigenvectors;     // column i belongs to eigenvalues[i]
    double lag = 0.0;
};

/// Top eigenpairs of a row-stochastic matrix that is reversible with respect
/// to the given weights: the similarity transform D^{1/2} P D^{-1/2} is
/// symmetric, so a self-adjoint solve returns a real spectrum.
inline Spectrum leading_spectrum(const Eigen::MatrixXd& p, const Eigen::VectorXd& weights,
                                 double lag, int k_eigs) {
    const int n = static_cast<int>(p.rows());
    if (k_eigs < 1 || k_eigs > n)
        throw std::invalid_argument("leading_spectrum: k_eigs out of range");
    const Eigen::VectorXd sqrt_w = weights.cwiseSqrt();
    Eigen::MatrixXd s = sqrt_w.asDiagonal() * p * sqrt_w.cwiseInverse().asDiagonal();
    s = 0.5 * (s + s.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
    if (solver.info() != Eigen::Success) throw numeric_error("leading_spectrum: eigensolve failed");

    Spectrum spec;
    spec.lag = lag;
    spec.eigenvalues.resize(k_eigs);
    spec.eigenvectors.resize(n, k_eigs);
    for (int i = 0; i < k_eigs; ++i) {
        const int src = n - 1 - i; // Eigen sorts ascending
        spec.eigenvalues[i] = solver.eigenvalues()(src);
        spec.eigenvectors.col(i) = solver.eigenvectors().col(src).cwiseQuotient(sqrt_w);
        // fix an overall sign for reproducible output
        double lead = 0.0;
        for (int r = 0; r < n; ++r)
            if (std::abs(spec.eigenvectors(r, i)) > std::abs(lead)) lead = spec.eigenvectors(r, i);
        if (lead < 0.0) spec.eigenvectors.col(i) *= -1.0;
    }
    return spec;
}

inline Spectrum leading_spectrum(const UlamModel& model, int k_eigs) {
    return leading_spectrum(model.matrix, model.stationary_weights, model.tau, k_eigs);
}

struct GapReport {
    std::vector<double> implied_rates;   // -log(lambda_i) for usable eigenvalues
    std::vector<int> skipped;            // indices with lambda <= 0
    std::vector<double> rate_ratios;     // theta_i / theta_{i+1}
    std::vector<double> eigenvalue_gaps; // lambda_i - lambda_{i+1}
    int largest_gap_index = -1;          // i maximizing theta_{i+1} - theta_i
};

inline GapReport gap_report(const Spectrum& spec) {
    if (spec.eigenvalues.size() < 2) throw std::invalid_argument("gap_report: need >= 2 eigenvalues");
    GapReport rep;
    std::vector<double> theta;
    for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i) {
        const double lam = spec.eigenvalues[i];
        if (lam <= 0.0) {
            rep.skipped.push_back(static_cast<int>(i));
            continue;
        }
        theta.push_back(-std::log(lam));
        rep.implied_rates.push_back(theta.back());
    }
    double best = -1.0;
    for (std::size_t i = 0; i + 1 < theta.size(); ++i) {
        rep.rate_ratios.push_back(theta[i + 1] > 0.0 ? theta[i] / theta[i + 1] : 0.0);
        const double gap = theta[i + 1] - theta[i];
        if (gap > best) {
            best = gap;
            rep.largest_gap_index = static_cast<int>(i);
        }
    }
    for (std::size_t i = 0; i + 1 < spec.eigenvalues.size(); ++i)
        rep.eigenvalue_gaps.push_back(spec.eigenvalues[i] - spec.eigenvalues[i + 1]);
    return rep;
}

/// Ratio of the slowest implied rate inside the leading cluster to the first
/// rate outside it. Values well below 1 certify a time-scale separation after
/// the cluster.
inline double cluster_gap_statistic(const Spectrum& spec, int cluster_size) {
    require(cluster_size >= 2 && static_cast<std::size_t>(cluster_size) < spec.eigenvalues.size(),
            "cluster_gap_statistic: cluster_size out of range");
    const double lam_in = std::min(spec.eigenvalues[cluster_size - 1], 1.0 - 1e-15);
    const double lam_out = std::min(spec.eigenvalues[cluster_size], 1.0 - 1e-15);
    if (lam_in <= 0.0 || lam_out <= 0.0)
        throw numeric_error("cluster_gap_statistic: nonpositive eigenvalue inside the window");
    return std::log(lam_in) / std::log(lam_out);
}

inline std::string spectrum_to_csv(const Spectrum& spec) {
    CsvBuilder csv("index,eigenvalue,implied_rate");
    for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i) {
        const double lam = spec.eigenvalues[i];
        const double rate = lam > 0.0 ? -std::log(lam) / spec.lag : std::nan("");
        csv.row({std::to_string(i), fmt_g(lam), fmt_g(rate)});
    }
    return csv.str();
}

inline std::string eigenvectors_to_csv(const UlamModel& model, const Spectrum& spec) {
    std::string header;
    for (int a = 0; a < model.dim; ++a) header += "center_" + std::to_string(a + 1) + ",";
    header += "weight";
    for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i) header += ",v" + std::to_string(i);
    CsvBuilder csv(header);
    for (int c = 0; c < static_cast<int>(model.kept_cells.size()); ++c) {
        std::vector<std::string> row;
        const Vec x = model.cell_center(c);
        for (double xi : x) row.push_back(fmt_g(xi));
        row.push_back(fmt_g(model.stationary_weights(c)));
        for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i)
            row.push_back(fmt_g(spec.eigenvectors(c, static_cast<int>(i))));
        csv.row(row);
    }
    return csv.str();
}

} // namespace rcq
