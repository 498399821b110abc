#pragma once

// Independent reference solutions used to validate the lattice solver:
//  * dense_direct_solve  — assembles the full operator matrix and factors it
//  * radial_massive_solve — 1D control-volume solve of the radial massive
//    problem on an annulus [1, R_out] with a prescribed flux at the unit
//    sphere and a decay (Robin) condition at R_out
//  * whole_space_green   — free-space massive Green's function (closed form
//    in d=3, numeric through the radial solver otherwise)

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "screed/core.hpp"
#include "screed/corrector.hpp"

namespace screed {

inline double sphere_surface_area(int d) {
    // |S^{d-1}| = 2 pi^{d/2} / Gamma(d/2)
    if (d < 1) throw usage_error("sphere_surface_area: dimension must be >= 1");
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

inline Eigen::MatrixXd dense_matrix(const operator_spec& A) {
    const std::int64_t n = A.dofs.n_dofs;
    if (n > 10000)
        throw resource_error("dense_matrix: " + std::to_string(n) + " DOFs exceeds the 10^4 budget");
    Eigen::MatrixXd M(n, n);
    std::vector<double> e(static_cast<std::size_t>(n), 0.0), col(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
        e[static_cast<std::size_t>(j)] = 1.0;
        apply_operator(A, e, col);
        for (std::int64_t i = 0; i < n; ++i) M(i, j) = col[static_cast<std::size_t>(i)];
        e[static_cast<std::size_t>(j)] = 0.0;
    }
    return M;
}

inline field dense_direct_solve(const operator_spec& A, const field& rhs) {
    const std::int64_t n = A.dofs.n_dofs;
    if (n > 10000)
        throw resource_error("dense_direct_solve: " + std::to_string(n) +
                             " DOFs exceeds the 10^4 budget");
    if (rhs.size() != static_cast<std::size_t>(n))
        throw usage_error("dense_direct_solve: rhs length does not match DOF count");
    Eigen::MatrixXd M = dense_matrix(A);
    Eigen::Map<const Eigen::VectorXd> b(rhs.data(), n);
    Eigen::VectorXd x = Eigen::LDLT<Eigen::MatrixXd>(M).solve(b);
    const double bnorm = b.norm();
    if (bnorm > 0.0) {
        const double rel = (M * x - b).norm() / bnorm;
        if (rel > 1e-12)
            throw solver_error("dense_direct_solve: residual " + std::to_string(rel) +
                               " above 1e-12");
    }
    return field(x.data(), x.data() + n);
}

// Smallest eigenvalue by inverse power iteration on the dense factorization.
inline double smallest_eigenvalue_dense(const operator_spec& A, int iters = 200) {
    Eigen::MatrixXd M = dense_matrix(A);
    Eigen::LDLT<Eigen::MatrixXd> fac(M);
    Eigen::VectorXd v = Eigen::VectorXd::Constant(M.rows(), 1.0);
    v += Eigen::VectorXd::LinSpaced(M.rows(), 0.0, 1.0);  // break symmetry
    v.normalize();
    double lambda = 0.0;
    for (int k = 0; k < iters; ++k) {
        Eigen::VectorXd w = fac.solve(v);
        const double norm = w.norm();
        if (!(norm > 0.0)) throw solver_error("inverse power iteration collapsed");
        v = w / norm;
        lambda = v.dot(M * v);
    }
    return lambda;
}

enum class flux_normalization { total, mean };  // total: omega_{d-1} v'(1) = g1; mean: v'(1) = g1
enum class outer_bc { robin, neumann };         // robin: v'(R_out) = -v(R_out)/sqrt(T)

struct radial_options {
    flux_normalization flux = flux_normalization::total;
    outer_bc outer = outer_bc::robin;
};

struct radial_profile {
    int d = 0;
    double T = 0.0;
    double g1 = 0.0;
    double g2 = 0.0;
    std::vector<double> radii;   // increasing, radii.front() = 1, radii.back() = R_out
    std::vector<double> values;
    radial_options options;

    std::size_t size() const { return radii.size(); }

    // Log-linear interpolation of the profile; r must lie in [1, R_out].
    double operator()(double r) const {
        if (r < radii.front() - 1e-12 || r > radii.back() + 1e-12)
            throw usage_error("radial_profile: radius " + std::to_string(r) +
                              " outside [1, R_out]");
        const double u = std::log(std::min(std::max(r, radii.front()), radii.back()));
        const double u0 = std::log(radii.front());
        const double du = (std::log(radii.back()) - u0) / static_cast<double>(radii.size() - 1);
        const auto j = static_cast<std::size_t>(
            std::min(static_cast<double>(radii.size() - 2), std::max(0.0, (u - u0) / du)));
        const double t = (u - (u0 + static_cast<double>(j) * du)) / du;
        return values[j] * (1.0 - t) + values[j + 1] * t;
    }
};

// Control-volume finite differences on a log-uniform mesh r_j = exp(j du):
// flux F_{j+1/2} = r_{j+1/2}^{d-1} (v_{j+1}-v_j)/(r_{j+1}-r_j), cell weight
// w_j = r_j^{d-1} (r_{j+1/2}-r_{j-1/2}); row j reads
//   (1/T) w_j v_j - F_{j+1/2} + F_{j-1/2} = g2 w_j,
// with the prescribed inner flux and the Robin (or Neumann) outer flux
// substituted at the ends.  SPD tridiagonal; Thomas solve.
inline radial_profile radial_massive_solve(int d, double T, double R_out, double g1, double g2,
                                           std::size_t m, radial_options options = {}) {
    if (d < 2) throw usage_error("radial_massive_solve: d must be >= 2");
    if (!(T > 0.0) || !std::isfinite(T))
        throw usage_error("radial_massive_solve: T must be positive and finite");
    if (!(R_out > 1.0)) throw usage_error("radial_massive_solve: R_out must exceed 1");
    if (m < 100) throw usage_error("radial_massive_solve: need at least 100 nodes");

    const std::size_t N = m + 1;
    const double du = std::log(R_out) / static_cast<double>(m);
    std::vector<double> r(N), rhalf(N + 1);  // rhalf[j] = r_{j-1/2}
    for (std::size_t j = 0; j < N; ++j) r[j] = std::exp(static_cast<double>(j) * du);
    rhalf[0] = 1.0;  // inner face sits on the unit sphere
    for (std::size_t j = 1; j < N; ++j)
        rhalf[j] = std::exp((static_cast<double>(j) - 0.5) * du);
    rhalf[N] = R_out;

    std::vector<double> lower(N, 0.0), diag(N, 0.0), upper(N, 0.0), rhs(N, 0.0);
    const double inner_flux =
        options.flux == flux_normalization::total ? g1 / sphere_surface_area(d) : g1;
    for (std::size_t j = 0; j < N; ++j) {
        const double w = std::pow(r[j], d - 1) * (rhalf[j + 1] - rhalf[j]);
        diag[j] += w / T;
        rhs[j] = g2 * w;
        if (j + 1 < N) {
            const double a = std::pow(rhalf[j + 1], d - 1) / (r[j + 1] - r[j]);
            diag[j] += a;
            upper[j] = -a;
            lower[j + 1] = -a;
            diag[j + 1] += a;
        }
    }
    rhs[0] -= inner_flux;  // +F_inner moved to the right-hand side
    if (options.outer == outer_bc::robin)
        diag[N - 1] += std::pow(R_out, d - 1) / std::sqrt(T);

    // Thomas elimination (SPD: no pivoting needed)
    for (std::size_t j = 1; j < N; ++j) {
        const double f = lower[j] / diag[j - 1];
        diag[j] -= f * upper[j - 1];
        rhs[j] -= f * rhs[j - 1];
    }
    std::vector<double> v(N);
    v[N - 1] = rhs[N - 1] / diag[N - 1];
    for (std::size_t j = N - 1; j-- > 0;) v[j] = (rhs[j] - upper[j] * v[j + 1]) / diag[j];

    radial_profile out;
    out.d = d;
    out.T = T;
    out.g1 = g1;
    out.g2 = g2;
    out.radii = std::move(r);
    out.values = std::move(v);
    out.options = options;
    for (double x : out.values)
        if (!std::isfinite(x)) throw solver_error("radial_massive_solve: non-finite profile");
    return out;
}

// Max interior defect of the discrete radial equation, for validation.
inline double radial_residual(const radial_profile& p) {
    const std::size_t N = p.radii.size();
    const double du = std::log(p.radii.back()) / static_cast<double>(N - 1);
    double worst = 0.0;
    for (std::size_t j = 1; j + 1 < N; ++j) {
        const double rm = std::exp((static_cast<double>(j) - 0.5) * du);
        const double rp = std::exp((static_cast<double>(j) + 0.5) * du);
        const double Fm = std::pow(rm, p.d - 1) * (p.values[j] - p.values[j - 1]) /
                          (p.radii[j] - p.radii[j - 1]);
        const double Fp = std::pow(rp, p.d - 1) * (p.values[j + 1] - p.values[j]) /
                          (p.radii[j + 1] - p.radii[j]);
        const double w = std::pow(p.radii[j], p.d - 1) * (rp - rm);
        const double defect = p.values[j] / p.T - (Fp - Fm) / w - p.g2;
        worst = std::max(worst, std::abs(defect));
    }
    return worst;
}

// Closed-form radial solution for d=3 (display/validation only; the ODE
// oracle is the trusted reference): v(r) = A e^{-(r-1)/sqrt(T)} / r with A
// fixed by the total flux omega_2 v'(1) = g1.
inline double radial_closed_form_d3(double T, double g1, double r) {
    if (!(r > 0.0)) throw usage_error("radial_closed_form_d3: r must be positive");
    const double s = 1.0 / std::sqrt(T);
    const double A = -g1 / (4.0 * std::numbers::pi * (1.0 + s));
    return A * std::exp(-(r - 1.0) * s) / r;
}

// Free-space massive Green's function.  d=3 in closed form for any r > 0;
// other d numerically through the annulus oracle with unit influx across the
// unit sphere, valid for r >= 1 (the (1/T) volume term inside the unit ball
// is dropped, which is immaterial for profile-shape checks).
inline double whole_space_green(int d, double T, double r, std::size_t m = 4000) {
    if (!(r > 0.0)) throw usage_error("whole_space_green: r = 0 is singular");
    if (!(T > 0.0)) throw usage_error("whole_space_green: T must be positive");
    if (d == 3) return std::exp(-r / std::sqrt(T)) / (4.0 * std::numbers::pi * r);
    if (d < 2) throw usage_error("whole_space_green: d must be >= 2");
    if (!std::isfinite(T))
        throw usage_error("whole_space_green: numeric profile needs finite T");
    if (r < 1.0)
        throw usage_error("whole_space_green: numeric profile starts at the unit sphere");
    const double R_out = std::max(8.0 * std::sqrt(T), 4.0 * r);
    radial_profile p = radial_massive_solve(d, T, R_out, -1.0, 0.0, m);
    return p(r);
}

}  // namespace screed
