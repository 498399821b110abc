#pragma once

// Small statistics toolbox: mean/standard-error, pooled variance with
// realization-level jackknife errors, and scaling-law fits in T.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "screed/core.hpp"

namespace screed {

struct sample_stats {
    double mean = 0.0;
    double se = 0.0;
    std::int64_t n = 0;
};

inline sample_stats mean_and_se(std::span<const double> xs) {
    sample_stats out;
    out.n = static_cast<std::int64_t>(xs.size());
    if (out.n == 0) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / static_cast<double>(out.n);
    if (out.n < 2) return out;
    double q = 0.0;
    for (double x : xs) q += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(q / static_cast<double>(out.n - 1) / static_cast<double>(out.n));
    return out;
}

// Per-realization first and second moments of the per-inclusion values.
struct pool_moment {
    std::int64_t count = 0;
    double sum = 0.0;
    double sumsq = 0.0;
};

// Population variance E[x^2] - E[x]^2 pooled over realizations.
inline double pooled_variance(std::span<const pool_moment> ms) {
    std::int64_t n = 0;
    double s = 0.0, q = 0.0;
    for (const auto& m : ms) {
        n += m.count;
        s += m.sum;
        q += m.sumsq;
    }
    if (n == 0) throw usage_error("pooled_variance: no samples");
    const double mean = s / static_cast<double>(n);
    return q / static_cast<double>(n) - mean * mean;
}

// Drop-one (realization-level) jackknife standard error of the pooled
// variance; realizations without samples are ignored.
inline double pooled_variance_jackknife_se(std::span<const pool_moment> ms) {
    std::int64_t n = 0, active = 0;
    double s = 0.0, q = 0.0;
    for (const auto& m : ms) {
        n += m.count;
        s += m.sum;
        q += m.sumsq;
        if (m.count > 0) ++active;
    }
    if (active < 2) return 0.0;
    std::vector<double> leave;
    leave.reserve(static_cast<std::size_t>(active));
    for (const auto& m : ms) {
        if (m.count == 0) continue;
        const auto nn = static_cast<double>(n - m.count);
        if (nn <= 0.0) return 0.0;
        const double mean = (s - m.sum) / nn;
        leave.push_back((q - m.sumsq) / nn - mean * mean);
    }
    double mean = 0.0;
    for (double v : leave) mean += v;
    mean /= static_cast<double>(leave.size());
    double acc = 0.0;
    for (double v : leave) acc += (v - mean) * (v - mean);
    const auto R = static_cast<double>(leave.size());
    return std::sqrt((R - 1.0) / R * acc);
}

enum class fit_kind { power, logarithmic };

struct scaling_fit {
    std::vector<std::pair<double, double>> inputs;  // (T, y)
    double exponent = 0.0;    // least-squares slope of log y vs log T
    double log_fit_r2 = 0.0;  // r^2 of the linear fit of y vs log T
    fit_kind which = fit_kind::power;
};

namespace detail {

inline double ls_slope(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / sxx;
}

inline double ls_r2(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (syy == 0.0) return 1.0;  // constant data: the flat line is a perfect fit
    return sxy * sxy / (sxx * syy);
}

}  // namespace detail

inline scaling_fit fit_scaling(std::span<const std::pair<double, double>> points, fit_kind kind) {
    if (points.size() < 3) throw usage_error("fit_scaling: need at least 3 points");
    std::vector<double> logT, logy, y;
    for (const auto& [t, v] : points) {
        if (!(t > 0.0)) throw usage_error("fit_scaling: T values must be positive");
        if (!(v > 0.0)) throw usage_error("fit_scaling: statistic values must be positive");
        logT.push_back(std::log(t));
        logy.push_back(std::log(v));
        y.push_back(v);
    }
    scaling_fit out;
    out.inputs.assign(points.begin(), points.end());
    out.which = kind;
    out.exponent = detail::ls_slope(logT, logy);
    out.log_fit_r2 = detail::ls_r2(logT, y);
    if (!std::isfinite(out.exponent)) throw usage_error("fit_scaling: non-finite exponent");
    return out;
}

// Discrimination rule for the d=4 regime: shallow power law plus a good
// linear-in-log-T fit reads as logarithmic growth.
inline bool is_logarithmic(const scaling_fit& fit) {
    return fit.exponent <= 0.15 && fit.log_fit_r2 >= 0.9;
}

}  // namespace screed
