#pragma once

// Spectral (FFT) solution of the linearized models on the full periodic
// lattice — no merged DOFs, mass everywhere:
//   (1/T - Lap_h) v = s,  v-hat(k) = s-hat(k) / (1/T + sigma(k)),
// with the finite-difference symbol sigma(k) = (4/h^2) sum_j sin^2(pi k_j/n)
// so that FFT and CG answers agree to solver precision.  The linearized
// sources (indicator minus realized volume fraction; forward-difference
// divergence of the indicator) are exactly mean-zero, and their mode 0 is
// pinned to zero.  FFTW plan creation is serialized behind a mutex; execution
// uses per-call buffers, so calls are safe from concurrent realizations and
// bit-identical across thread counts.

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <vector>

#include "screed/core.hpp"
#include "screed/lattice.hpp"

namespace screed {

struct spectral_field {
    grid g;
    std::vector<double> values;  // cell-indexed, row-major
};

struct coulomb_parts {
    double massive = 0.0;    // box average of (1/T) v^2
    double dirichlet = 0.0;  // box average of |forward-difference grad v|^2
};

inline double spectral_symbol(const grid& g, const std::int64_t* k) {
    double s = 0.0;
    for (int j = 0; j < g.d; ++j) {
        const double sj = std::sin(std::numbers::pi * static_cast<double>(k[j]) /
                                   static_cast<double>(g.n));
        s += sj * sj;
    }
    return 4.0 / (g.h * g.h) * s;
}

namespace detail {

inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

inline std::vector<double> fft_solve(const grid& g, const std::vector<double>& src, double T,
                                     bool zero_mode0) {
    if (!(T > 0.0) || !std::isfinite(T))
        throw usage_error("spectral solve: T must be positive and finite");
    if (src.size() != static_cast<std::size_t>(g.cells()))
        throw usage_error("spectral solve: source length does not match the grid");
    if (g.n > std::numeric_limits<int>::max())
        throw resource_error("spectral solve: grid side exceeds FFT size limits");

    const auto n = static_cast<std::int64_t>(g.n);
    const std::int64_t last = n / 2 + 1;
    const std::int64_t n_real = g.cells();
    const std::int64_t n_cplx = ipow(n, g.d - 1) * last;

    double* re = fftw_alloc_real(static_cast<std::size_t>(n_real));
    fftw_complex* cx = fftw_alloc_complex(static_cast<std::size_t>(n_cplx));
    if (!re || !cx) {
        fftw_free(re);
        fftw_free(cx);
        throw resource_error("spectral solve: FFT buffer allocation failed");
    }
    int dims[8];
    for (int j = 0; j < g.d; ++j) dims[j] = static_cast<int>(n);
    fftw_plan fwd, bwd;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fwd = fftw_plan_dft_r2c(g.d, dims, re, cx, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_c2r(g.d, dims, cx, re, FFTW_ESTIMATE);
    }
    std::copy(src.begin(), src.end(), re);
    fftw_execute(fwd);

    // sin^2 lookup shared by every axis
    std::vector<double> table(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        const double s =
            std::sin(std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
        table[static_cast<std::size_t>(k)] = 4.0 / (g.h * g.h) * s * s;
    }
    for (std::int64_t c = 0; c < n_cplx; ++c) {
        std::int64_t rem = c;
        double sigma = table[static_cast<std::size_t>(rem % last)];
        rem /= last;
        for (int j = g.d - 2; j >= 0; --j) {
            sigma += table[static_cast<std::size_t>(rem % n)];
            rem /= n;
        }
        const double denom = 1.0 / T + sigma;
        cx[c][0] /= denom;
        cx[c][1] /= denom;
    }
    if (zero_mode0) cx[0][0] = cx[0][1] = 0.0;

    fftw_execute(bwd);
    std::vector<double> out(static_cast<std::size_t>(n_real));
    const double scale = 1.0 / static_cast<double>(n_real);
    for (std::int64_t c = 0; c < n_real; ++c) out[static_cast<std::size_t>(c)] = re[c] * scale;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
    }
    fftw_free(re);
    fftw_free(cx);
    return out;
}

inline void check_same_grid(const grid& g, const geometry& geo, const char* who) {
    if (geo.g.d != g.d || geo.g.n != g.n || geo.g.h != g.h)
        throw usage_error(std::string(who) + ": geometry was rasterized on a different grid");
}

}  // namespace detail

// Generic massive solve; mode 0 follows the mass term (v-hat(0) = T s-hat(0)).
inline spectral_field spectral_solve(const grid& g, const std::vector<double>& src, double T) {
    return {g, detail::fft_solve(g, src, T, false)};
}

// (1/T - Lap) v = indicator(B) - theta_h, exactly mean-zero source.
inline spectral_field solve_linearized_fft(const grid& g, const geometry& geo, double T) {
    detail::check_same_grid(g, geo, "solve_linearized_fft");
    std::vector<double> src(static_cast<std::size_t>(g.cells()));
    for (std::size_t c = 0; c < src.size(); ++c)
        src[c] = (geo.label[c] >= 0 ? 1.0 : 0.0) - geo.theta_h;
    return {g, detail::fft_solve(g, src, T, true)};
}

// (1/T - Lap) w = forward-difference divergence of indicator(B) e_dir.
inline spectral_field solve_divform_fft(const grid& g, const geometry& geo, double T,
                                        int direction) {
    detail::check_same_grid(g, geo, "solve_divform_fft");
    if (direction < 0 || direction >= g.d)
        throw usage_error("solve_divform_fft: direction out of range");
    std::vector<double> src(static_cast<std::size_t>(g.cells()));
    std::int64_t stride[8];
    stride[g.d - 1] = 1;
    for (int j = g.d - 2; j >= 0; --j) stride[j] = stride[j + 1] * g.n;
    std::int64_t idx[8] = {0};
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        const std::int64_t nb = (idx[direction] == g.n - 1)
                                    ? c - (g.n - 1) * stride[direction]
                                    : c + stride[direction];
        const double here = geo.label[static_cast<std::size_t>(c)] >= 0 ? 1.0 : 0.0;
        const double next = geo.label[static_cast<std::size_t>(nb)] >= 0 ? 1.0 : 0.0;
        src[static_cast<std::size_t>(c)] = (next - here) / g.h;
        int j = g.d - 1;
        while (j >= 0 && idx[j] == g.n - 1) idx[j--] = 0;
        if (j >= 0) ++idx[j];
    }
    return {g, detail::fft_solve(g, src, T, true)};
}

inline double field_mean(const spectral_field& v) {
    double s = 0.0;
    for (double x : v.values) s += x;
    return s / static_cast<double>(v.values.size());
}

inline double field_mean_sq(const spectral_field& v) {
    double s = 0.0;
    for (double x : v.values) s += x * x;
    return s / static_cast<double>(v.values.size());
}

inline coulomb_parts coulomb_energy(const spectral_field& v, double T) {
    const grid& g = v.g;
    coulomb_parts out;
    out.massive = field_mean_sq(v) / T;
    std::int64_t stride[8];
    stride[g.d - 1] = 1;
    for (int j = g.d - 2; j >= 0; --j) stride[j] = stride[j + 1] * g.n;
    std::int64_t idx[8] = {0};
    double acc = 0.0;
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        for (int j = 0; j < g.d; ++j) {
            const std::int64_t nb =
                (idx[j] == g.n - 1) ? c - (g.n - 1) * stride[j] : c + stride[j];
            const double diff = (v.values[static_cast<std::size_t>(nb)] -
                                 v.values[static_cast<std::size_t>(c)]) /
                                g.h;
            acc += diff * diff;
        }
        int j = g.d - 1;
        while (j >= 0 && idx[j] == g.n - 1) idx[j--] = 0;
        if (j >= 0) ++idx[j];
    }
    out.dirichlet = acc / static_cast<double>(g.cells());
    return out;
}

// Box average of v^2 computed in Fourier space (Parseval), for consistency
// checks against the direct cell sum.
inline double spectral_norm_sq(const spectral_field& v) {
    const grid& g = v.g;
    const auto n = static_cast<std::int64_t>(g.n);
    const std::int64_t last = n / 2 + 1;
    const std::int64_t n_real = g.cells();
    const std::int64_t n_cplx = ipow(n, g.d - 1) * last;
    double* re = fftw_alloc_real(static_cast<std::size_t>(n_real));
    fftw_complex* cx = fftw_alloc_complex(static_cast<std::size_t>(n_cplx));
    if (!re || !cx) {
        fftw_free(re);
        fftw_free(cx);
        throw resource_error("spectral_norm_sq: FFT buffer allocation failed");
    }
    int dims[8];
    for (int j = 0; j < g.d; ++j) dims[j] = static_cast<int>(n);
    fftw_plan fwd;
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        fwd = fftw_plan_dft_r2c(g.d, dims, re, cx, FFTW_ESTIMATE);
    }
    std::copy(v.values.begin(), v.values.end(), re);
    fftw_execute(fwd);
    double s = 0.0;
    for (std::int64_t c = 0; c < n_cplx; ++c) {
        const std::int64_t kd = c % last;
        const bool self_conjugate = kd == 0 || (n % 2 == 0 && kd == n / 2);
        const double w = self_conjugate ? 1.0 : 2.0;
        s += w * (cx[c][0] * cx[c][0] + cx[c][1] * cx[c][1]);
    }
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        fftw_destroy_plan(fwd);
    }
    fftw_free(re);
    fftw_free(cx);
    return s / (static_cast<double>(n_real) * static_cast<double>(n_real));
}

}  // namespace screed
