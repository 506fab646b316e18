#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rcq/common.hpp"
#include "rcq/csv.hpp"
#include "rcq/parallel.hpp"
#include "rcq/potential.hpp"
#include "rcq/rng.hpp"

namespace rcq {

// Integrator configuration for the overdamped dynamics
//   dX = -grad V(X) dt + sqrt(2 / beta) dW.
struct SdeConfig {
    double beta = 1.0;
    double dt = 1e-3;
    double tau = 0.1;   // lag time of one burst; must be an integer multiple of dt
    std::uint64_t seed = 0;
    bool substep_guard = true; // sub-step dt/10 whenever |grad V| dt > 0.5

    int steps() const {
        require(beta > 0.0 && dt > 0.0 && tau > 0.0, "SdeConfig: beta, dt, tau must be positive");
        const double ratio = tau / dt;
        const double rounded = std::round(ratio);
        require(std::abs(ratio - rounded) < 1e-9 && rounded >= 1.0,
                "SdeConfig: tau must be a positive integer multiple of dt");
        return static_cast<int>(rounded);
    }
};

/// One explicit Euler-Maruyama step: x - grad V(x) dt + sqrt(2 dt / beta) * noise.
inline Vec em_step(const Vec& x, const Potential& pot, const SdeConfig& cfg, const Vec& noise) {
    if (noise.size() != x.size())
        throw std::invalid_argument("em_step: noise dimension mismatch");
    const Vec g = pot.gradient(x);
    if (!all_finite(g)) {
        std::string msg = "em_step: non-finite gradient at (";
        for (std::size_t i = 0; i < x.size(); ++i) msg += (i ? "," : "") + fmt_g(x[i]);
        throw numeric_error(msg + ")");
    }
    const double amp = std::sqrt(2.0 * cfg.dt / cfg.beta);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - g[i] * cfg.dt + amp * noise[i];
    return y;
}

// Advances one lag time tau, consuming Gaussian draws from rng. When the
// guard triggers, the step is split into 10 sub-steps with independent noise;
// the variance budget per macro step is unchanged.
inline Vec advance_lag(Vec x, const Potential& pot, const SdeConfig& cfg, RngStream& rng) {
    const int n = cfg.steps();
    const int d = static_cast<int>(x.size());
    for (int s = 0; s < n; ++s) {
        bool stiff = false;
        if (cfg.substep_guard) {
            const Vec g = pot.gradient(x);
            if (!all_finite(g)) throw numeric_error("advance_lag: non-finite gradient");
            stiff = norm2(g) * cfg.dt > 0.5;
        }
        if (stiff) {
            SdeConfig sub = cfg;
            sub.dt = cfg.dt / 10.0;
            for (int k = 0; k < 10; ++k) x = em_step(x, pot, sub, rng.normal_vec(d));
        } else {
            x = em_step(x, pot, cfg, rng.normal_vec(d));
        }
    }
    return x;
}

// Endpoints of n parallel tau-length trajectories from one start point; an
// empirical sample of the transition density out of that point.
struct BurstEnsemble {
    Vec start;
    std::vector<Vec> endpoints;
    double tau = 0.0;
    SdeConfig meta;
};

/// Stream used by replica `idx` of a burst with the given base seed.
inline RngStream burst_replica_stream(std::uint64_t seed, std::size_t idx) {
    return RngStream::from_path(seed, {0x62757273ULL, idx});
}

inline BurstEnsemble simulate_burst(const Vec& x0, const Potential& pot, const SdeConfig& cfg,
                                    std::size_t n_replicas, int threads = 1) {
    require(n_replicas >= 1, "simulate_burst: n_replicas >= 1 required");
    cfg.steps(); // validate
    BurstEnsemble out;
    out.start = x0;
    out.tau = cfg.tau;
    out.meta = cfg;
    out.endpoints.assign(n_replicas, Vec());
    std::vector<std::string> failures(n_replicas);
    parallel_for(n_replicas, threads, [&](std::size_t r) {
        try {
            RngStream rng = burst_replica_stream(cfg.seed, r);
            Vec y = advance_lag(x0, pot, cfg, rng);
            if (!all_finite(y)) throw numeric_error("non-finite endpoint");
            out.endpoints[r] = std::move(y);
        } catch (const std::exception& e) {
            failures[r] = e.what();
        }
    });
    for (std::size_t r = 0; r < n_replicas; ++r)
        if (!failures[r].empty())
            throw numeric_error("simulate_burst: replica " + std::to_string(r) + ": " + failures[r]);
    return out;
}

// CSV layout: header row x0_1,...,x0_n,tau,seed; one row with those values;
// then one endpoint per row.
inline std::string burst_to_csv(const BurstEnsemble& b) {
    const int d = static_cast<int>(b.start.size());
    std::string header;
    for (int i = 0; i < d; ++i) header += "x0_" + std::to_string(i + 1) + ",";
    header += "tau,seed";
    CsvBuilder csv(header);
    std::vector<std::string> meta;
    for (double v : b.start) meta.push_back(fmt_g(v, 17));
    meta.push_back(fmt_g(b.tau, 17));
    meta.push_back(std::to_string(b.meta.seed));
    csv.row(meta);
    for (const Vec& e : b.endpoints) {
        std::vector<std::string> row;
        for (double v : e) row.push_back(fmt_g(v, 17));
        csv.row(row);
    }
    return csv.str();
}

inline BurstEnsemble burst_from_csv(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    if (lines.size() < 2) throw numeric_error("burst_from_csv: truncated input");
    const auto header = split_csv_line(lines[0]);
    const int d = static_cast<int>(header.size()) - 2;
    if (d < 1) throw numeric_error("burst_from_csv: bad header");
    const auto meta = split_csv_line(lines[1]);
    BurstEnsemble b;
    for (int i = 0; i < d; ++i) b.start.push_back(std::stod(meta[i]));
    b.tau = std::stod(meta[d]);
    b.meta.tau = b.tau;
    b.meta.seed = std::stoull(meta[d + 1]);
    for (std::size_t k = 2; k < lines.size(); ++k) {
        if (lines[k].empty()) continue;
        const auto f = split_csv_line(lines[k]);
        Vec e;
        for (int i = 0; i < d; ++i) e.push_back(std::stod(f[i]));
        b.endpoints.push_back(std::move(e));
    }
    return b;
}

} // namespace rcq
