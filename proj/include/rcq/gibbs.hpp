#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rcq/common.hpp"
#include "rcq/grid.hpp"
#include "rcq/potential.hpp"
#include "rcq/rng.hpp"

namespace rcq {

// Stationary density exp(-beta V) / Z with Z computed by tensor-product
// quadrature over the potential's domain box.
class GibbsDensity {
public:
    GibbsDensity(Potential pot, double beta, int quad_nodes = 0)
        : pot_(std::move(pot)), beta_(beta) {
        require(beta > 0.0, "GibbsDensity: beta must be positive");
        if (quad_nodes <= 0) quad_nodes = pot_.dim() == 1 ? 4096 : 256;
        GridSpec grid{pot_.domain_box, quad_nodes};
        z_ = integrate_midpoint(grid, [&](const Vec& x) { return std::exp(-beta_ * pot_.value(x)); });
        if (!(z_ > 0.0) || !std::isfinite(z_))
            throw numeric_error("GibbsDensity: normalization failed");
    }

    double operator()(const Vec& x) const { return std::exp(-beta_ * pot_.value(x)) / z_; }

    // Outside the domain box the formula still evaluates but the quadrature
    // never saw that region; the flag reports the extrapolation.
    double eval(const Vec& x, bool* extrapolated) const {
        if (extrapolated) *extrapolated = !pot_.domain_box.contains(x);
        return (*this)(x);
    }

    double log_unnormalized(const Vec& x) const { return -beta_ * pot_.value(x); }
    double normalization() const { return z_; }
    double beta() const { return beta_; }
    const Box& box() const { return pot_.domain_box; }
    const Potential& potential() const { return pot_; }

private:
    Potential pot_;
    double beta_;
    double z_ = 0.0;
};

struct MetropolisOptions {
    std::size_t burn_in = 10000;
    std::size_t tune_batch = 250;
    double target_lo = 0.2;
    double target_hi = 0.4;
    std::size_t pilot = 4096;   // steps used to estimate the thinning interval
    std::size_t max_thin = 256;
    double initial_scale = 0.0; // 0 = derived from the box
};

struct MetropolisDiagnostics {
    double acceptance = 0.0;
    double proposal_scale = 0.0;
    std::size_t thin = 1;
};

namespace detail {

class MetropolisChain {
public:
    MetropolisChain(const Potential& pot, double beta, double scale, RngStream& rng)
        : pot_(&pot), beta_(beta), scale_(scale), rng_(&rng) {
        const Box& box = pot.domain_box;
        x_.resize(box.dim());
        for (int i = 0; i < box.dim(); ++i) x_[i] = 0.5 * (box.lo[i] + box.hi[i]);
        logp_ = -beta_ * pot_->value(x_);
    }

    bool step() {
        Vec y(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) y[i] = x_[i] + scale_ * rng_->normal();
        const double logq = -beta_ * pot_->value(y);
        if (logq - logp_ >= 0.0 || rng_->uniform() < std::exp(logq - logp_)) {
            x_ = std::move(y);
            logp_ = logq;
            return true;
        }
        return false;
    }

    const Vec& state() const { return x_; }
    double energy() const { return -logp_ / beta_; }
    void set_scale(double s) { scale_ = s; }
    double scale() const { return scale_; }

private:
    const Potential* pot_;
    double beta_;
    double scale_;
    RngStream* rng_;
    Vec x_;
    double logp_;
};

inline double lag_autocorrelation(const std::vector<double>& v, std::size_t lag) {
    const std::size_t n = v.size();
    if (lag >= n - 1) return 0.0;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(n);
    double var = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (v[i] - m) * (v[i] - m);
    for (std::size_t i = 0; i + lag < n; ++i) cov += (v[i] - m) * (v[i + lag] - m);
    if (var <= 0.0) return 0.0;
    return (cov / static_cast<double>(n - lag)) / (var / static_cast<double>(n));
}

} // namespace detail

/// Draws n approximately independent samples from exp(-beta V)/Z via a random
/// walk Metropolis chain: proposal scale auto-tuned into the 20-40% acceptance
/// band during burn-in, then thinned so consecutive kept samples have energy
/// autocorrelation below 0.1.
inline std::vector<Vec> sample_stationary(const Potential& pot, double beta,
                                          std::size_t n_samples, std::uint64_t seed,
                                          const MetropolisOptions& opts = {},
                                          MetropolisDiagnostics* diag = nullptr) {
    require(n_samples >= 1, "sample_stationary: n_samples >= 1 required");
    RngStream rng = RngStream::from_path(seed, {0x6d657472ULL});
    double scale = opts.initial_scale;
    if (scale <= 0.0) {
        double span = 0.0;
        for (int i = 0; i < pot.dim(); ++i) span = std::max(span, pot.domain_box.hi[i] - pot.domain_box.lo[i]);
        scale = 0.25 * span / std::sqrt(static_cast<double>(pot.dim()));
    }
    detail::MetropolisChain chain(pot, beta, scale, rng);

    // scale tuning interleaved with burn-in
    std::size_t done = 0;
    double last_rate = 0.0;
    while (done < opts.burn_in) {
        std::size_t acc = 0;
        for (std::size_t s = 0; s < opts.tune_batch; ++s) acc += chain.step() ? 1 : 0;
        done += opts.tune_batch;
        last_rate = static_cast<double>(acc) / static_cast<double>(opts.tune_batch);
        if (last_rate < opts.target_lo)
            chain.set_scale(chain.scale() / 1.4);
        else if (last_rate > opts.target_hi)
            chain.set_scale(chain.scale() * 1.4);
    }
    if (last_rate < 0.05 || last_rate > 0.8)
        throw config_error("sample_stationary: proposal tuning stuck at acceptance " +
                           std::to_string(last_rate));

    // pilot run to pick the thinning interval; the energy series is the
    // primary signal, the coordinates guard against degenerate (flat) energy
    std::vector<std::vector<double>> pilot_series(1 + pot.dim());
    for (std::size_t s = 0; s < opts.pilot; ++s) {
        chain.step();
        pilot_series[0].push_back(chain.energy());
        for (int a = 0; a < pot.dim(); ++a) pilot_series[1 + a].push_back(chain.state()[a]);
    }
    std::size_t thin = 1;
    for (const auto& series : pilot_series) {
        double spread = 0.0;
        for (double v : series) spread = std::max(spread, std::abs(v - series.front()));
        if (spread < 1e-12) continue;
        std::size_t needed = opts.max_thin;
        for (std::size_t lag = 1; lag <= opts.max_thin; ++lag) {
            if (std::abs(detail::lag_autocorrelation(series, lag)) < 0.1) {
                needed = lag;
                break;
            }
        }
        thin = std::max(thin, needed);
    }

    std::vector<Vec> out;
    out.reserve(n_samples);
    std::size_t accepted = 0, steps = 0;
    while (out.size() < n_samples) {
        for (std::size_t s = 0; s < thin; ++s) {
            accepted += chain.step() ? 1 : 0;
            ++steps;
        }
        out.push_back(chain.state());
    }
    if (diag) {
        diag->acceptance = static_cast<double>(accepted) / static_cast<double>(steps);
        diag->proposal_scale = chain.scale();
        diag->thin = thin;
    }
    return out;
}

} // namespace rcq
