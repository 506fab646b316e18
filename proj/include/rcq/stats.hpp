#pragma once

#include <cmath>
#include <vector>

#include "rcq/common.hpp"

namespace rcq {

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Unbiased sample variance.
inline double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) throw numeric_error("sample_variance: need at least 2 samples");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double std_error_of_mean(const std::vector<double>& v) {
    return std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw numeric_error("fit_line: need matching vectors with >= 2 points");
    const double mx = mean(xs), my = mean(ys);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

inline LineFit fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] <= 0.0 || ys[i] <= 0.0)
            throw numeric_error("fit_loglog: nonpositive input");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    return fit_line(lx, ly);
}

// One-sided sign test: probability of >= wins successes out of n fair coin
// flips. Small values reject "no systematic difference".
inline double sign_test_p_value(int wins, int n) {
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        const double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(logc - n * std::log(2.0));
    }
    return p < 1.0 ? p : 1.0;
}

} // namespace rcq
