#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rcq/common.hpp"
#include "rcq/csv.hpp"
#include "rcq/loss.hpp"
#include "rcq/reaction_coordinate.hpp"
#include "rcq/rng.hpp"
#include "rcq/torus.hpp"

namespace rcq {

// Finite-state reversible chain used as the exact brute-force reference:
// every loss functional and the integrand statistics reduce to finite sums.
struct DiscreteChain {
    int n_states = 0;
    Eigen::MatrixXd P;       // row-stochastic transition matrix at the lag time
    Eigen::VectorXd pi;      // stationary probabilities
    std::vector<int> labels; // state -> level class
    int n_labels = 0;

    // set when the chain discretizes a torus kernel; states are grid cells
    std::optional<GridSpec> cell_geometry;

    double max_row_sum_error() const {
        double worst = 0.0;
        for (int i = 0; i < n_states; ++i) worst = std::max(worst, std::abs(P.row(i).sum() - 1.0));
        return worst;
    }

    double max_stationarity_residual() const {
        const Eigen::VectorXd r = P.transpose() * pi - pi;
        return r.cwiseAbs().maxCoeff();
    }

    double max_detailed_balance_residual() const {
        double worst = 0.0;
        for (int i = 0; i < n_states; ++i)
            for (int j = 0; j < n_states; ++j)
                worst = std::max(worst, std::abs(pi(i) * P(i, j) - pi(j) * P(j, i)));
        return worst;
    }

    void validate_labels() const {
        std::vector<bool> seen(n_labels, false);
        for (int l : labels) {
            require(l >= 0 && l < n_labels, "DiscreteChain: label out of range");
            seen[l] = true;
        }
        for (int c = 0; c < n_labels; ++c)
            if (!seen[c]) throw numeric_error("DiscreteChain: empty label class " + std::to_string(c));
    }
};

/// Reversible chain from a random symmetric positive flow matrix: P = D^{-1} S
/// with D the row sums of S; then pi is proportional to the row sums and
/// detailed balance holds by construction.
inline DiscreteChain random_reversible_chain(int n_states, int n_labels, RngStream& rng) {
    require(n_states >= 2 && n_labels >= 1 && n_labels <= n_states,
            "random_reversible_chain: need 2 <= n_labels <= n_states");
    DiscreteChain c;
    c.n_states = n_states;
    c.n_labels = n_labels;
    Eigen::MatrixXd s(n_states, n_states);
    for (int i = 0; i < n_states; ++i)
        for (int j = i; j < n_states; ++j) s(i, j) = s(j, i) = rng.uniform(0.05, 1.0);
    const Eigen::VectorXd d = s.rowwise().sum();
    c.P = d.cwiseInverse().asDiagonal() * s;
    c.pi = d / d.sum();
    // random surjective labeling
    for (;;) {
        c.labels.assign(n_states, 0);
        std::vector<bool> seen(n_labels, false);
        for (int i = 0; i < n_states; ++i) {
            c.labels[i] = static_cast<int>(rng.uniform_index(n_labels));
            seen[c.labels[i]] = true;
        }
        bool ok = true;
        for (bool b : seen) ok = ok && b;
        if (ok) break;
    }
    return c;
}

/// Exactly lumpable chain: rows constant within blocks. Built from a reversible
/// aggregated chain and per-block interior distributions, which preserves
/// reversibility of the full chain.
inline DiscreteChain block_constant_chain(const Eigen::MatrixXd& agg_P,
                                          const Eigen::VectorXd& agg_pi,
                                          const std::vector<int>& block_sizes, RngStream& rng) {
    const int L = static_cast<int>(block_sizes.size());
    require(agg_P.rows() == L && agg_P.cols() == L && agg_pi.size() == L,
            "block_constant_chain: size mismatch");
    int n = 0;
    for (int b : block_sizes) n += b;
    DiscreteChain c;
    c.n_states = n;
    c.n_labels = L;
    c.labels.resize(n);
    std::vector<Eigen::VectorXd> nu(L);
    {
        int s = 0;
        for (int b = 0; b < L; ++b) {
            nu[b].resize(block_sizes[b]);
            for (int i = 0; i < block_sizes[b]; ++i) nu[b](i) = rng.uniform(0.2, 1.0);
            nu[b] /= nu[b].sum();
            for (int i = 0; i < block_sizes[b]; ++i) c.labels[s + i] = b;
            s += block_sizes[b];
        }
    }
    c.P.resize(n, n);
    c.pi.resize(n);
    std::vector<int> offset(L, 0);
    for (int b = 1; b < L; ++b) offset[b] = offset[b - 1] + block_sizes[b - 1];
    for (int i = 0; i < n; ++i) {
        const int bi = c.labels[i];
        c.pi(i) = agg_pi(bi) * nu[bi](i - offset[bi]);
        for (int j = 0; j < n; ++j) {
            const int bj = c.labels[j];
            c.P(i, j) = agg_P(bi, bj) * nu[bj](j - offset[bj]);
        }
    }
    return c;
}

/// Random reversible aggregated chain helper for block constructions.
inline void random_reversible_matrix(int n, RngStream& rng, Eigen::MatrixXd& P,
                                     Eigen::VectorXd& pi) {
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) s(i, j) = s(j, i) = rng.uniform(0.05, 1.0);
    const Eigen::VectorXd d = s.rowwise().sum();
    P = d.cwiseInverse().asDiagonal() * s;
    pi = d / d.sum();
}

/// Adds a symmetric positive perturbation of magnitude eps to the stationary
/// flow pi_i P_ij and renormalizes; reversibility is preserved while the
/// block-lumpable structure is broken at scale eps.
inline void perturb_reversible(DiscreteChain& chain, double eps, RngStream& rng) {
    const int n = chain.n_states;
    Eigen::MatrixXd f = chain.pi.asDiagonal() * chain.P;
    f = 0.5 * (f + f.transpose().eval()); // clean numerical asymmetry first
    Eigen::MatrixXd delta(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) delta(i, j) = delta(j, i) = rng.uniform(0.0, 1.0);
    delta /= delta.sum();
    f = (1.0 - eps) * f / f.sum() + eps * delta;
    const Eigen::VectorXd d = f.rowwise().sum();
    chain.P = d.cwiseInverse().asDiagonal() * f;
    chain.pi = d / d.sum();
}

/// Grid collocation of a torus kernel: cells of a k-per-axis partition become
/// states, P_ij is proportional to the kernel between cell centers. Kernel
/// symmetry plus grid translation invariance make P exactly symmetric and the
/// stationary vector exactly uniform. Labels partition the first axis.
inline DiscreteChain discretize_torus_kernel(const TorusKernelSpec& spec, int k_per_axis,
                                             int first_axis_labels = 0) {
    spec.validate();
    require(spec.n <= 3 && k_per_axis >= 2 && k_per_axis <= 64,
            "discretize_torus_kernel: n <= 3 and 2 <= k <= 64 required");
    int n_states = 1;
    for (int a = 0; a < spec.n; ++a) n_states *= k_per_axis;
    require(n_states <= 4096, "discretize_torus_kernel: state count cap exceeded");
    if (first_axis_labels <= 0) first_axis_labels = k_per_axis;
    require(k_per_axis % first_axis_labels == 0,
            "discretize_torus_kernel: label count must divide k_per_axis");

    const TorusKernel kernel(spec);
    const GridSpec grid{Box::cube(spec.n, -pi, pi), k_per_axis};
    std::vector<Vec> centers(n_states, Vec(spec.n));
    {
        std::vector<int> idx(spec.n, 0);
        for (int s = 0; s < n_states; ++s) {
            for (int a = 0; a < spec.n; ++a) centers[s][a] = grid.node_coord(a, idx[a]);
            for (int a = spec.n - 1; a >= 0; --a) {
                if (++idx[a] < k_per_axis) break;
                idx[a] = 0;
            }
        }
    }
    DiscreteChain c;
    c.n_states = n_states;
    c.P.resize(n_states, n_states);
    for (int i = 0; i < n_states; ++i)
        for (int j = 0; j < n_states; ++j) c.P(i, j) = kernel.density(centers[i], centers[j]);
    for (int i = 0; i < n_states; ++i) c.P.row(i) /= c.P.row(i).sum();
    c.pi = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    c.labels.resize(n_states);
    const int per_label = k_per_axis / first_axis_labels;
    int fast_cells = 1;
    for (int a = 1; a < spec.n; ++a) fast_cells *= k_per_axis;
    for (int s = 0; s < n_states; ++s) c.labels[s] = (s / fast_cells) / per_label;
    c.n_labels = first_axis_labels;
    c.cell_geometry = grid;
    return c;
}

// All four loss functionals as exact finite sums. Level-set measures are the
// stationary distribution restricted to a label class and normalized; the
// range prefactor is the label-class count.
struct ExactLosses {
    double lump_differential = 0.0;
    double deflat_differential = 0.0;
    double lump_constructive = 0.0;
    double deflat_constructive = 0.0;
};

namespace detail {

struct LabelClasses {
    std::vector<std::vector<int>> members;
    std::vector<Eigen::VectorXd> weights; // pi restricted to the class, normalized
    std::vector<double> mass;
};

inline LabelClasses split_classes(const DiscreteChain& c) {
    c.validate_labels();
    LabelClasses lc;
    lc.members.resize(c.n_labels);
    lc.weights.resize(c.n_labels);
    lc.mass.assign(c.n_labels, 0.0);
    for (int i = 0; i < c.n_states; ++i) {
        lc.members[c.labels[i]].push_back(i);
        lc.mass[c.labels[i]] += c.pi(i);
    }
    for (int b = 0; b < c.n_labels; ++b) {
        lc.weights[b].resize(lc.members[b].size());
        for (std::size_t k = 0; k < lc.members[b].size(); ++k)
            lc.weights[b](k) = c.pi(lc.members[b][k]) / lc.mass[b];
    }
    return lc;
}

} // namespace detail

inline ExactLosses exact_losses(const DiscreteChain& c) {
    const auto lc = detail::split_classes(c);
    const int L = c.n_labels;
    ExactLosses out;

    // observable ratios q(x, y) = P(x,y) / pi(y)
    Eigen::MatrixXd q = c.P * c.pi.cwiseInverse().asDiagonal();

    for (int b = 0; b < L; ++b) {
        const auto& mem = lc.members[b];
        const auto& w = lc.weights[b];
        const std::size_t m = mem.size();

        // density-side conditional mean
        Eigen::RowVectorXd p_l = Eigen::RowVectorXd::Zero(c.n_states);
        for (std::size_t k = 0; k < m; ++k) p_l += w(k) * c.P.row(mem[k]);
        // observable-side conditional mean
        Eigen::VectorXd p_d = Eigen::VectorXd::Zero(c.n_states);
        for (std::size_t k = 0; k < m; ++k) p_d += w(k) * q.col(mem[k]);

        double lt_l = 0.0, lt_d = 0.0, lh_l = 0.0, lh_d = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
            lh_l += w(a) * (c.P.row(mem[a]) - p_l).cwiseAbs().sum();
            lh_d += w(a) * ((q.col(mem[a]) - p_d).cwiseAbs().array() * c.pi.array()).sum();
            for (std::size_t bb = 0; bb < m; ++bb) {
                lt_l += w(a) * w(bb) * (c.P.row(mem[a]) - c.P.row(mem[bb])).cwiseAbs().sum();
                lt_d += w(a) * w(bb) *
                        ((q.col(mem[a]) - q.col(mem[bb])).cwiseAbs().array() * c.pi.array()).sum();
            }
        }
        out.lump_differential += lt_l;
        out.deflat_differential += lt_d;
        out.lump_constructive += lh_l;
        out.deflat_constructive += lh_d;
    }
    out.lump_differential /= L;
    out.deflat_differential /= L;
    out.lump_constructive /= L;
    out.deflat_constructive /= L;
    return out;
}

struct ExactIntegrand {
    Eigen::VectorXd f;       // per-state integrand values
    double mean = 0.0;       // E_pi[f]
    double variance = 0.0;   // Var_pi(f)
};

/// Exact per-state integrand of the observable-side loss and its stationary
/// mean and variance.
inline ExactIntegrand exact_f_and_variance(const DiscreteChain& c) {
    const auto lc = detail::split_classes(c);
    Eigen::MatrixXd q = c.P * c.pi.cwiseInverse().asDiagonal();
    ExactIntegrand out;
    out.f = Eigen::VectorXd::Zero(c.n_states);
    for (int x = 0; x < c.n_states; ++x) {
        double acc = 0.0;
        for (int b = 0; b < c.n_labels; ++b) {
            const auto& mem = lc.members[b];
            const auto& w = lc.weights[b];
            for (std::size_t a = 0; a < mem.size(); ++a)
                for (std::size_t bb = 0; bb < mem.size(); ++bb)
                    acc += w(a) * w(bb) * std::abs(q(x, mem[a]) - q(x, mem[bb]));
        }
        out.f(x) = acc / c.n_labels;
    }
    out.mean = out.f.dot(c.pi);
    out.variance = out.f.cwiseAbs2().dot(c.pi) - out.mean * out.mean;
    return out;
}

struct EffectiveIntegrand {
    Eigen::VectorXd f_labels;   // integrand of the class-averaged effective kernel
    Eigen::VectorXd label_mass; // stationary mass per lumping class
    double mean = 0.0;
    double variance = 0.0;      // variance under the class-mass distribution
};

/// Integrand evaluated on the conditional-mean effective kernel. Two label
/// roles are distinct: the chain's own labels play the candidate coordinate
/// appearing inside the integrand, while `lumping_labels` defines the classes
/// over which the kernel is averaged (and the effective stationary masses).
/// For chains whose rows are constant on the lumping classes this reproduces
/// the full-state integrand variance exactly.
inline EffectiveIntegrand effective_f_and_variance(const DiscreteChain& c,
                                                   const std::vector<int>& lumping_labels,
                                                   int n_lumping) {
    const auto cand = detail::split_classes(c);
    require(static_cast<int>(lumping_labels.size()) == c.n_states,
            "effective_f_and_variance: lumping label size mismatch");
    Eigen::MatrixXd q = c.P * c.pi.cwiseInverse().asDiagonal();

    // effective observable rows: q_L(z, y) = sum_{x in lumping class z} w(x) q(x, y)
    Eigen::MatrixXd q_l = Eigen::MatrixXd::Zero(n_lumping, c.n_states);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(n_lumping);
    for (int i = 0; i < c.n_states; ++i) mass(lumping_labels[i]) += c.pi(i);
    for (int i = 0; i < c.n_states; ++i)
        q_l.row(lumping_labels[i]) += (c.pi(i) / mass(lumping_labels[i])) * q.row(i);

    EffectiveIntegrand out;
    out.f_labels = Eigen::VectorXd::Zero(n_lumping);
    out.label_mass = mass;
    for (int z = 0; z < n_lumping; ++z) {
        double acc = 0.0;
        for (int b = 0; b < c.n_labels; ++b) {
            const auto& mem = cand.members[b];
            const auto& w = cand.weights[b];
            for (std::size_t a = 0; a < mem.size(); ++a)
                for (std::size_t bb = 0; bb < mem.size(); ++bb)
                    acc += w(a) * w(bb) * std::abs(q_l(z, mem[a]) - q_l(z, mem[bb]));
        }
        out.f_labels(z) = acc / c.n_labels;
    }
    out.mean = out.f_labels.dot(out.label_mass);
    out.variance = out.f_labels.cwiseAbs2().dot(out.label_mass) - out.mean * out.mean;
    return out;
}

inline EffectiveIntegrand effective_f_and_variance(const DiscreteChain& c) {
    return effective_f_and_variance(c, c.labels, c.n_labels);
}

/// Random surjective labeling of n states into L classes.
inline std::vector<int> random_surjective_labels(int n_states, int n_labels, RngStream& rng) {
    for (;;) {
        std::vector<int> labels(n_states);
        std::vector<bool> seen(n_labels, false);
        for (int i = 0; i < n_states; ++i) {
            labels[i] = static_cast<int>(rng.uniform_index(n_labels));
            seen[labels[i]] = true;
        }
        bool ok = true;
        for (bool b : seen) ok = ok && b;
        if (ok) return labels;
    }
}

/// Constructive observable-side loss with the effective observable obtained by
/// transforming the density-side conditional mean through detailed balance,
/// p_D(x, z) = p_L(z, x) / pi(x). On reversible chains this equals the
/// constructive loss built directly from observable averages.
inline double deflat_constructive_from_transform(const DiscreteChain& c) {
    const auto lc = detail::split_classes(c);
    Eigen::MatrixXd q = c.P * c.pi.cwiseInverse().asDiagonal();
    double total = 0.0;
    for (int b = 0; b < c.n_labels; ++b) {
        const auto& mem = lc.members[b];
        const auto& w = lc.weights[b];
        Eigen::RowVectorXd p_l = Eigen::RowVectorXd::Zero(c.n_states);
        for (std::size_t k = 0; k < mem.size(); ++k) p_l += w(k) * c.P.row(mem[k]);
        const Eigen::VectorXd p_d = p_l.transpose().cwiseQuotient(c.pi);
        for (std::size_t a = 0; a < mem.size(); ++a)
            total += w(a) * ((q.col(mem[a]) - p_d).cwiseAbs().array() * c.pi.array()).sum();
    }
    return total / c.n_labels;
}

// ---- continuous stand-in over a discretized torus kernel ----

/// Transition access whose forward densities are piecewise constant over the
/// chain's grid cells. Together with the first-coordinate projection this
/// reproduces the discrete losses exactly, giving the Monte Carlo estimators a
/// computable ground truth.
inline TransitionAccess make_chain_access(const DiscreteChain& chain, int l1_nodes_per_axis = 0) {
    require(chain.cell_geometry.has_value(), "make_chain_access: chain carries no cell geometry");
    const GridSpec cells = *chain.cell_geometry;
    const double cell_vol = cells.cell_volume();
    if (l1_nodes_per_axis <= 0) l1_nodes_per_axis = cells.nodes_per_axis;
    require(l1_nodes_per_axis % cells.nodes_per_axis == 0,
            "make_chain_access: L1 grid must align with the cell partition");
    TransitionAccess acc;
    acc.mode = TransitionAccess::Mode::discrete_standin;
    acc.l1_grid = GridSpec{cells.box, l1_nodes_per_axis};
    // copying P by value keeps the access self-contained
    Eigen::MatrixXd p = chain.P;
    acc.forward = [p, cells, cell_vol](const Vec& x) {
        const std::int64_t cx = grid_cell_of(cells, wrap_point(x));
        if (cx < 0) throw numeric_error("chain access: point outside the torus box");
        return [p, cells, cell_vol, cx](const Vec& y) {
            const std::int64_t cy = grid_cell_of(cells, wrap_point(y));
            if (cy < 0) throw numeric_error("chain access: point outside the torus box");
            return p(cx, cy) / cell_vol;
        };
    };
    acc.stationary = [v = 1.0 / cells.box.volume()](const Vec&) { return v; };
    return acc;
}

// ---- CSV serialization (test fixtures) ----

inline std::string chain_to_csv(const DiscreteChain& c) {
    CsvBuilder csv("n_states," + std::to_string(c.n_states) + ",n_labels," +
                   std::to_string(c.n_labels));
    for (int i = 0; i < c.n_states; ++i) {
        std::vector<std::string> row;
        for (int j = 0; j < c.n_states; ++j) row.push_back(fmt_g(c.P(i, j), 17));
        csv.row(row);
    }
    std::vector<std::string> pr;
    for (int i = 0; i < c.n_states; ++i) pr.push_back(fmt_g(c.pi(i), 17));
    csv.row(pr);
    std::vector<std::string> lr;
    for (int i = 0; i < c.n_states; ++i) lr.push_back(std::to_string(c.labels[i]));
    csv.row(lr);
    return csv.str();
}

inline DiscreteChain chain_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw numeric_error("chain_from_csv: empty input");
    const auto head = split_csv_line(line);
    if (head.size() != 4 || head[0] != "n_states" || head[2] != "n_labels")
        throw numeric_error("chain_from_csv: bad header");
    DiscreteChain c;
    c.n_states = std::stoi(head[1]);
    c.n_labels = std::stoi(head[3]);
    c.P.resize(c.n_states, c.n_states);
    for (int i = 0; i < c.n_states; ++i) {
        std::getline(in, line);
        const auto f = split_csv_line(line);
        for (int j = 0; j < c.n_states; ++j) c.P(i, j) = std::stod(f[j]);
    }
    std::getline(in, line);
    const auto pf = split_csv_line(line);
    c.pi.resize(c.n_states);
    for (int i = 0; i < c.n_states; ++i) c.pi(i) = std::stod(pf[i]);
    std::getline(in, line);
    const auto lf = split_csv_line(line);
    for (int i = 0; i < c.n_states; ++i) c.labels.push_back(std::stoi(lf[i]));
    return c;
}

} // namespace rcq
