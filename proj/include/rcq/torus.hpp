#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rcq/common.hpp"
#include "rcq/rng.hpp"

namespace rcq {

// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
    double w = a - two_pi * std::floor((a + pi) / two_pi);
    if (w >= pi) w -= two_pi;
    if (w < -pi) w += two_pi;
    return w;
}

inline Vec wrap_point(Vec x) {
    for (double& a : x) a = wrap_angle(a);
    return x;
}

/// Circular Gaussian on [-pi, pi) with scale parameter sigma.
///
/// Two equivalent representations are used depending on the regime:
///  - cosine series (1 + 2 sum_k rho^{k^2} cos(k delta)) / (2 pi) with
///    rho = exp(-sigma^2 / 2), truncated at the first coefficient below
///    `threshold`; fast for sigma >= 0.25,
///  - a sum over Gaussian images delta + 2 pi m, |m| <= 6, which converges
///    quickly for small sigma where the series would need many terms.
class WrappedNormal {
public:
    explicit WrappedNormal(double sigma, double threshold = 1e-16) : sigma_(sigma) {
        if (!(sigma > 0.0)) throw std::domain_error("WrappedNormal: sigma must be positive");
        image_mode_ = sigma < 0.25;
        if (!image_mode_) {
            const double rho = std::exp(-0.5 * sigma * sigma);
            double c = rho;       // rho^{k^2}
            double q = rho * rho; // rho^{2k+1} starts at k=1 with rho^3
            q *= rho;
            while (c >= threshold) {
                coeffs_.push_back(c);
                c *= q;
                q *= rho * rho;
            }
        }
    }

    double sigma() const { return sigma_; }
    /// Derived series base exp(-sigma^2 / 2); the k-th coefficient is rho^{k^2}.
    double rho() const { return std::exp(-0.5 * sigma_ * sigma_); }
    std::size_t terms() const { return coeffs_.size(); }

    double operator()(double delta) const {
        delta = wrap_angle(delta);
        if (image_mode_) {
            const double inv = 1.0 / (2.0 * sigma_ * sigma_);
            double s = 0.0;
            for (int m = -6; m <= 6; ++m) {
                const double d = delta + two_pi * m;
                s += std::exp(-d * d * inv);
            }
            return s / std::sqrt(two_pi * sigma_ * sigma_);
        }
        // Chebyshev recurrence for cos(k delta)
        const double c1 = std::cos(delta);
        double ckm1 = 1.0, ck = c1;
        double s = 0.0;
        for (double c : coeffs_) {
            s += c * ck;
            const double next = 2.0 * c1 * ck - ckm1;
            ckm1 = ck;
            ck = next;
        }
        const double v = (1.0 + 2.0 * s) / two_pi;
        return v > 0.0 ? v : 0.0; // truncated series can dip slightly negative
    }

private:
    double sigma_;
    bool image_mode_ = false;
    std::vector<double> coeffs_;
};

inline double wrapped_normal_density(double delta, double sigma, double threshold = 1e-16) {
    return WrappedNormal(sigma, threshold)(delta);
}

// Diffusion scale of the fast coordinate directions. The infinite variant
// selects the limit process whose fast components equilibrate instantly; it is
// a distinct state rather than a float sentinel so no inf/NaN arithmetic can
// leak into the product formula.
class SigmaParam {
public:
    static SigmaParam finite(double value) {
        if (!(value > 0.0)) throw config_error("sigma must be positive");
        SigmaParam s;
        s.value_ = value;
        return s;
    }
    static SigmaParam infinity() { return SigmaParam{}; }

    bool is_infinite() const { return !value_.has_value(); }
    double value() const {
        if (is_infinite()) throw config_error("sigma is infinite");
        return *value_;
    }
    std::string str() const { return is_infinite() ? "inf" : std::to_string(*value_); }

private:
    std::optional<double> value_;
};

// Kernel family on the n-torus: one slow coordinate with scale tau, n-1 fast
// coordinates with scale tau*sigma. The stationary density is uniform.
struct TorusKernelSpec {
    int n = 2;
    double tau = 1.0;
    SigmaParam sigma = SigmaParam::finite(2.0);

    void validate() const {
        require(n >= 1, "TorusKernelSpec: n >= 1 required");
        require(tau > 0.0, "TorusKernelSpec: tau > 0 required");
    }
};

class TorusKernel {
public:
    explicit TorusKernel(TorusKernelSpec spec) : spec_(spec), g_slow_(spec.tau) {
        spec_.validate();
        if (!spec_.sigma.is_infinite() && spec_.n >= 2)
            g_fast_.emplace(spec_.tau * spec_.sigma.value());
        inv_vol_fast_ = std::pow(two_pi, -(spec_.n - 1));
    }

    const TorusKernelSpec& spec() const { return spec_; }

    /// Uniform stationary density (2 pi)^{-n}.
    double stationary() const { return std::pow(two_pi, -spec_.n); }

    /// Transition density p(x, y).
    double density(const Vec& x, const Vec& y) const {
        check_dim(x);
        check_dim(y);
        double v = g_slow_(y[0] - x[0]);
        if (spec_.sigma.is_infinite()) return v * inv_vol_fast_;
        for (int i = 1; i < spec_.n; ++i) v *= (*g_fast_)(y[i] - x[i]);
        return v;
    }

    /// Effective density p_L(z, y): the kernel after collapsing the fast
    /// coordinates to their uniform equilibrium. Depends on y only through y1.
    double effective_density(double z, const Vec& y) const {
        require(spec_.n >= 2, "effective_density: needs n >= 2");
        check_dim(y);
        return inv_vol_fast_ * g_slow_(y[0] - z);
    }

    /// density / stationary
    double ratio(const Vec& x, const Vec& y) const { return density(x, y) / stationary(); }

private:
    void check_dim(const Vec& v) const {
        if (static_cast<int>(v.size()) != spec_.n)
            throw std::invalid_argument("TorusKernel: point dimension mismatch");
    }

    TorusKernelSpec spec_;
    WrappedNormal g_slow_;
    std::optional<WrappedNormal> g_fast_;
    double inv_vol_fast_ = 1.0;
};

inline double kernel_density(const TorusKernelSpec& spec, const Vec& x, const Vec& y) {
    return TorusKernel(spec).density(x, y);
}

inline double effective_density_pL(const TorusKernelSpec& spec, double z, const Vec& y) {
    return TorusKernel(spec).effective_density(z, y);
}

struct LumpabilityOptions {
    int nodes_per_axis = 0; // 0 = per-dimension default
    int dim_cap = 4;
    bool monte_carlo = false;
    std::size_t mc_samples = 400000;
    std::uint64_t seed = 0;
};

/// Distance between the full kernel and the effective kernel composed with the
/// first-coordinate projection, in the kernel norm (inner L1 over the second
/// argument, outer stationary-weighted L1 over the first).
///
/// Both kernels share the slow factor, so the difference factorizes and the
/// slow coordinate integrates out exactly. Translation invariance removes the
/// outer integral as well, leaving an (n-1)-dimensional integral over the fast
/// difference angles:
///   dist = int_{T^{n-1}} | prod_i g_fast(d_i) - (2 pi)^{-(n-1)} | d(d_2..d_n).
inline double lumpability_distance(const TorusKernelSpec& spec,
                                   const LumpabilityOptions& opts = {}) {
    spec.validate();
    require(spec.n >= 2, "lumpability_distance: needs n >= 2");
    if (spec.sigma.is_infinite()) return 0.0; // kernels coincide in the limit

    const int m = spec.n - 1;
    const double target = std::pow(two_pi, -m);
    const WrappedNormal g(spec.tau * spec.sigma.value());

    if (m > opts.dim_cap && !opts.monte_carlo)
        throw config_error("lumpability_distance: " + std::to_string(m) +
                           " quadrature dimensions exceed cap " + std::to_string(opts.dim_cap) +
                           "; set monte_carlo=true to sample instead");

    if (m > opts.dim_cap) {
        RngStream rng(derive_seed(opts.seed, {0x6c756d70ULL}));
        double acc = 0.0;
        for (std::size_t s = 0; s < opts.mc_samples; ++s) {
            double prod = 1.0;
            for (int i = 0; i < m; ++i) prod *= g(rng.uniform(-pi, pi));
            acc += std::abs(prod - target);
        }
        return acc / static_cast<double>(opts.mc_samples) * std::pow(two_pi, m);
    }

    int nodes = opts.nodes_per_axis;
    if (nodes <= 0) {
        static constexpr int defaults[] = {0, 4096, 512, 128, 48};
        nodes = defaults[m];
    }
    const double h = two_pi / nodes;
    std::vector<double> gtab(nodes);
    for (int i = 0; i < nodes; ++i) gtab[i] = g(-pi + (i + 0.5) * h);

    std::int64_t total = 1;
    for (int i = 0; i < m; ++i) total *= nodes;
    double acc = 0.0;
    std::vector<int> idx(m, 0);
    for (std::int64_t flat = 0; flat < total; ++flat) {
        double prod = 1.0;
        for (int a = 0; a < m; ++a) prod *= gtab[idx[a]];
        acc += std::abs(prod - target);
        for (int a = m - 1; a >= 0; --a) {
            if (++idx[a] < nodes) break;
            idx[a] = 0;
        }
    }
    return acc * std::pow(h, m);
}

} // namespace rcq
