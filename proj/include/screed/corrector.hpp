#pragma once

// Discrete massive corrector problem.  Unknowns: one value per fluid cell
// plus one merged value per inclusion.  Bilinear form
//   a(u,v) = (1/T) sum_{fluid} u_c v_c h^d
//          + sum_{adjacent pairs} (u_{c'} - u_c)(v_{c'} - v_c) h^{d-2},
// i.e. the screened graph Laplacian with inclusion cells collapsed to a
// single node each; edges interior to an inclusion drop out automatically.
// The right-hand side implements the neutrality condition with the realized
// volume fraction, which makes the mean-zero and energy identities exact in
// the box (up to solver tolerance).

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "screed/core.hpp"
#include "screed/lattice.hpp"

namespace screed {

using field = std::vector<double>;

struct dof_map {
    std::vector<std::int32_t> dof;  // per cell: fluid cells in row-major order, then inclusions
    std::int64_t n_fluid = 0;
    std::int64_t n_dofs = 0;
};

inline dof_map build_dof_map(const geometry& geo) {
    dof_map m;
    m.dof.resize(geo.label.size());
    std::int32_t next = 0;
    for (std::size_t c = 0; c < geo.label.size(); ++c)
        if (geo.label[c] < 0) m.dof[c] = next++;
    m.n_fluid = next;
    for (std::size_t c = 0; c < geo.label.size(); ++c)
        if (geo.label[c] >= 0) m.dof[c] = next + geo.label[c];
    m.n_dofs = m.n_fluid + static_cast<std::int64_t>(geo.inclusions());
    return m;
}

struct operator_spec {
    const geometry* geo = nullptr;  // not owned; must outlive the spec
    double T = 0.0;
    dof_map dofs;

    const grid& g() const { return geo->g; }
};

inline operator_spec make_operator(const geometry& geo, double T) {
    if (!(T > 0.0)) throw usage_error("screening parameter T must be positive");
    operator_spec spec;
    spec.geo = &geo;
    spec.T = T;
    spec.dofs = build_dof_map(geo);
    return spec;
}

// out := A u (Riesz vector of a(u, .)); single-threaded, hence bit-stable.
inline void apply_operator(const operator_spec& A, std::span<const double> u,
                           std::span<double> out) {
    const geometry& geo = *A.geo;
    const grid& g = geo.g;
    if (u.size() != static_cast<std::size_t>(A.dofs.n_dofs) || out.size() != u.size())
        throw usage_error("apply_operator: field length does not match DOF count");

    std::fill(out.begin(), out.end(), 0.0);
    const double hd = std::pow(g.h, g.d);
    const double w = std::pow(g.h, g.d - 2);
    const double mass = hd / A.T;
    const std::int32_t* dof = A.dofs.dof.data();
    const std::int32_t* lab = geo.label.data();

    std::int64_t stride[8];
    stride[g.d - 1] = 1;
    for (int j = g.d - 2; j >= 0; --j) stride[j] = stride[j + 1] * g.n;
    std::int64_t idx[8] = {0};

    const std::int64_t cells = g.cells();
    for (std::int64_t c = 0; c < cells; ++c) {
        const std::int32_t q = dof[c];
        if (lab[c] < 0) out[q] += mass * u[q];
        for (int j = 0; j < g.d; ++j) {
            const std::int64_t nb =
                (idx[j] == g.n - 1) ? c - (g.n - 1) * stride[j] : c + stride[j];
            const std::int32_t qn = dof[nb];
            if (qn != q) {
                const double diff = w * (u[q] - u[qn]);
                out[q] += diff;
                out[qn] -= diff;
            }
        }
        int j = g.d - 1;
        while (j >= 0 && idx[j] == g.n - 1) idx[j--] = 0;
        if (j >= 0) ++idx[j];
    }
}

inline field apply_operator(const operator_spec& A, const field& u) {
    field out(u.size());
    apply_operator(A, u, out);
    return out;
}

// Neutral forcing: fluid cells get gbar_theta h^d, inclusion i gets -gbar Vol_i,
// with gbar_theta = gbar * theta_h / (1 - theta_h); entries sum to zero.
inline field assemble_rhs(const operator_spec& A, double gbar) {
    const geometry& geo = *A.geo;
    if (geo.fluid_cells == 0) throw usage_error("assemble_rhs: no fluid cells (theta_h = 1)");
    const double hd = std::pow(geo.g.h, geo.g.d);
    const double gtheta = gbar * geo.theta_h / (1.0 - geo.theta_h);
    field b(static_cast<std::size_t>(A.dofs.n_dofs));
    for (std::int64_t q = 0; q < A.dofs.n_fluid; ++q) b[q] = gtheta * hd;
    for (std::size_t i = 0; i < geo.inclusions(); ++i)
        b[A.dofs.n_fluid + i] = -gbar * geo.inclusion_volume[i];
    return b;
}

struct cg_options {
    double tol = 1e-10;    // on ||b - Ax|| / ||b||
    std::int64_t maxit = 0;  // 0: use 50 * n (cells per side)
    bool jacobi = false;
};

struct cg_outcome {
    std::int64_t iterations = 0;
    double residual = 0.0;
    bool converged = true;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

// Plain (optionally Jacobi-preconditioned) conjugate gradients on any SPD
// operator given as a callable out := A(in).
template <class Apply>
cg_outcome cg_solve(Apply&& apply, std::span<const double> b, std::vector<double>& x,
                    const cg_options& opts, std::span<const double> diag = {}) {
    const std::size_t n = b.size();
    x.assign(n, 0.0);
    cg_outcome out;
    const double bnorm = std::sqrt(detail::dot(b, b));
    if (bnorm == 0.0) return out;  // zero-RHS convention: x = 0

    std::vector<double> r(b.begin(), b.end()), z(n), p(n), Ap(n);
    auto precond = [&](const std::vector<double>& rr, std::vector<double>& zz) {
        if (diag.empty())
            zz = rr;
        else
            for (std::size_t i = 0; i < n; ++i) zz[i] = rr[i] / diag[i];
    };
    precond(r, z);
    p = z;
    double rz = detail::dot(r, z);
    const std::int64_t maxit = opts.maxit;
    double rnorm = bnorm;
    while (out.iterations < maxit) {
        apply(std::span<const double>(p), std::span<double>(Ap));
        const double alpha = rz / detail::dot(p, Ap);
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
        for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * Ap[i];
        ++out.iterations;
        rnorm = std::sqrt(detail::dot(r, r));
        if (rnorm <= opts.tol * bnorm) break;
        precond(r, z);
        const double rz_next = detail::dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    // report the true residual, not the recurrence's
    apply(std::span<const double>(x), std::span<double>(Ap));
    for (std::size_t i = 0; i < n; ++i) Ap[i] = b[i] - Ap[i];
    out.residual = std::sqrt(detail::dot(Ap, Ap)) / bnorm;
    out.converged = out.residual <= opts.tol;
    return out;
}

struct solve_result {
    field u;  // fluid DOFs in cell order, then inclusion values
    std::vector<double> inclusion_values;
    std::int64_t iterations = 0;
    double residual = 0.0;
    double energy_massive = 0.0;
    double energy_dirichlet = 0.0;
};

struct nonconvergence_error : solver_error {
    solve_result partial;
    nonconvergence_error(const std::string& msg, solve_result r)
        : solver_error(msg), partial(std::move(r)) {}
};

inline double dirichlet_energy(const operator_spec& A, std::span<const double> u) {
    const geometry& geo = *A.geo;
    const grid& g = geo.g;
    const double w = std::pow(g.h, g.d - 2);
    const std::int32_t* dof = A.dofs.dof.data();
    std::int64_t stride[8];
    stride[g.d - 1] = 1;
    for (int j = g.d - 2; j >= 0; --j) stride[j] = stride[j + 1] * g.n;
    std::int64_t idx[8] = {0};
    double e = 0.0;
    const std::int64_t cells = g.cells();
    for (std::int64_t c = 0; c < cells; ++c) {
        const std::int32_t q = dof[c];
        for (int j = 0; j < g.d; ++j) {
            const std::int64_t nb =
                (idx[j] == g.n - 1) ? c - (g.n - 1) * stride[j] : c + stride[j];
            const std::int32_t qn = dof[nb];
            if (qn != q) {
                const double diff = u[q] - u[qn];
                e += w * diff * diff;
            }
        }
        int j = g.d - 1;
        while (j >= 0 && idx[j] == g.n - 1) idx[j--] = 0;
        if (j >= 0) ++idx[j];
    }
    return e;
}

inline void fill_energies(const operator_spec& A, solve_result& res) {
    const geometry& geo = *A.geo;
    const double hd = std::pow(geo.g.h, geo.g.d);
    double m = 0.0;
    for (std::int64_t q = 0; q < A.dofs.n_fluid; ++q) m += res.u[q] * res.u[q];
    res.energy_massive = m * hd / A.T;
    res.energy_dirichlet = dirichlet_energy(A, res.u);
}

inline solve_result solve_corrector(const operator_spec& A, double gbar,
                                    const cg_options& opts = {}) {
    field b = assemble_rhs(A, gbar);
    cg_options o = opts;
    if (o.maxit == 0) o.maxit = 50 * A.g().n;
    std::vector<double> diag;
    if (o.jacobi) {
        diag.assign(b.size(), 0.0);
        const geometry& geo = *A.geo;
        const grid& g = geo.g;
        const double hd = std::pow(g.h, g.d), w = std::pow(g.h, g.d - 2);
        std::int64_t stride[8];
        stride[g.d - 1] = 1;
        for (int j = g.d - 2; j >= 0; --j) stride[j] = stride[j + 1] * g.n;
        std::int64_t idx[8] = {0};
        for (std::int64_t c = 0; c < g.cells(); ++c) {
            const std::int32_t q = A.dofs.dof[c];
            if (geo.label[c] < 0) diag[q] += hd / A.T;
            for (int j = 0; j < g.d; ++j) {
                const std::int64_t nb =
                    (idx[j] == g.n - 1) ? c - (g.n - 1) * stride[j] : c + stride[j];
                const std::int32_t qn = A.dofs.dof[nb];
                if (qn != q) {
                    diag[q] += w;
                    diag[qn] += w;
                }
            }
            int j = g.d - 1;
            while (j >= 0 && idx[j] == g.n - 1) idx[j--] = 0;
            if (j >= 0) ++idx[j];
        }
    }

    solve_result res;
    auto outcome = cg_solve([&](std::span<const double> in,
                                std::span<double> out) { apply_operator(A, in, out); },
                            b, res.u, o, diag);
    res.iterations = outcome.iterations;
    res.residual = outcome.residual;
    res.inclusion_values.assign(res.u.begin() + A.dofs.n_fluid, res.u.end());
    fill_energies(A, res);
    if (!outcome.converged)
        throw nonconvergence_error("corrector CG did not reach tol " + std::to_string(o.tol) +
                                       " in " + std::to_string(outcome.iterations) +
                                       " iterations (residual " +
                                       std::to_string(outcome.residual) + ")",
                                   std::move(res));
    return res;
}

// Obstacle Green's function: a(G, v) = v(source) for all v.
inline solve_result green_function(const operator_spec& A, std::int64_t source_cell,
                                   const cg_options& opts = {}) {
    const geometry& geo = *A.geo;
    if (source_cell < 0 || source_cell >= geo.g.cells())
        throw usage_error("green_function: source cell out of range");
    if (geo.label[static_cast<std::size_t>(source_cell)] >= 0)
        throw usage_error("green_function: source cell lies inside an inclusion");
    for (std::size_t i = 0; i < geo.inclusions(); ++i)
        if (cell_point_distance(geo.g, source_cell, geo.center_of(i)) < 2.0)
            throw usage_error("green_function: source cell within distance 2 of inclusion " +
                              std::to_string(i));

    field b(static_cast<std::size_t>(A.dofs.n_dofs), 0.0);
    b[A.dofs.dof[static_cast<std::size_t>(source_cell)]] = 1.0;
    cg_options o = opts;
    if (o.maxit == 0) o.maxit = 50 * A.g().n;
    solve_result res;
    auto outcome = cg_solve([&](std::span<const double> in,
                                std::span<double> out) { apply_operator(A, in, out); },
                            b, res.u, o);
    res.iterations = outcome.iterations;
    res.residual = outcome.residual;
    res.inclusion_values.assign(res.u.begin() + A.dofs.n_fluid, res.u.end());
    fill_energies(A, res);
    if (!outcome.converged)
        throw nonconvergence_error("Green's function CG did not converge",
                                   std::move(res));
    return res;
}

// First fluid cell at distance >= 2 from every inclusion center.
inline std::int64_t find_green_source(const geometry& geo) {
    for (std::int64_t c = 0; c < geo.g.cells(); ++c) {
        if (geo.label[static_cast<std::size_t>(c)] >= 0) continue;
        bool ok = true;
        for (std::size_t i = 0; i < geo.inclusions() && ok; ++i)
            ok = cell_point_distance(geo.g, c, geo.center_of(i)) >= 2.0;
        if (ok) return c;
    }
    throw usage_error("no admissible Green source cell (every fluid cell is within 2 of an inclusion)");
}

inline double effective_field_box(const solve_result& res, const geometry& geo) {
    if (geo.inclusions() == 0)
        throw usage_error("effective_field_box: no inclusions, statistic undefined");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < geo.inclusions(); ++i) {
        num += res.inclusion_values[i] * geo.inclusion_volume[i];
        den += geo.inclusion_volume[i];
    }
    return num / den;
}

// Defects of the two exact discrete identities, in relative form.
struct identity_report {
    double mean0_abs = 0.0;   // |sum_fluid u h^d|
    double mean0_rel = 0.0;   // ... / (||u||_2 sqrt(vol))
    double energy_abs = 0.0;  // |a(u,u) + gbar sum_i u_i Vol_i|
    double energy_rel = 0.0;  // ... / a(u,u)
    double energy_total = 0.0;
    double u_bar_box = 0.0;
};

inline identity_report check_identities(const operator_spec& A, double gbar,
                                        const solve_result& res) {
    const geometry& geo = *A.geo;
    const double hd = std::pow(geo.g.h, geo.g.d);
    identity_report rep;
    double fluid_sum = 0.0, l2sq = 0.0;
    for (std::int64_t q = 0; q < A.dofs.n_fluid; ++q) {
        fluid_sum += res.u[q];
        l2sq += res.u[q] * res.u[q];
    }
    fluid_sum *= hd;
    l2sq *= hd;
    double flux_sum = 0.0;
    for (std::size_t i = 0; i < geo.inclusions(); ++i) {
        const double ui = res.inclusion_values[i];
        l2sq += ui * ui * geo.inclusion_volume[i];
        flux_sum += ui * geo.inclusion_volume[i];
    }
    const double vol = std::pow(geo.g.L(), geo.g.d);
    rep.mean0_abs = std::abs(fluid_sum);
    rep.mean0_rel = l2sq > 0.0 ? rep.mean0_abs / (std::sqrt(l2sq) * std::sqrt(vol)) : 0.0;
    rep.energy_total = res.energy_massive + res.energy_dirichlet;
    rep.energy_abs = std::abs(rep.energy_total + gbar * flux_sum);
    rep.energy_rel = rep.energy_total > 0.0 ? rep.energy_abs / rep.energy_total : 0.0;
    if (geo.inclusions() > 0) rep.u_bar_box = effective_field_box(res, geo);
    return rep;
}

struct decay_fit {
    double slope = 0.0;
    double r_lo = 0.0;
    double r_hi = 0.0;
    int bins_used = 0;
};

// Least-squares slope of the shell-averaged log|G| against log r: |G| is
// geometrically averaged over the fluid cells of log-spaced radial shells
// covering [r_lo, r_hi), and a line is fitted through the shell means at the
// bin midpoints.
inline decay_fit green_decay_fit(const operator_spec& A, const solve_result& res,
                                 std::int64_t source_cell, double r_lo, double r_hi,
                                 int bins = 12) {
    const geometry& geo = *A.geo;
    const grid& g = geo.g;
    if (!(r_lo > 0.0) || !(r_hi > r_lo)) throw usage_error("decay fit: bad radial window");
    if (bins < 2) throw usage_error("decay fit: need at least 2 bins");
    if (source_cell < 0 || source_cell >= g.cells())
        throw usage_error("decay fit: source cell out of range");

    std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<std::int64_t> cnt(static_cast<std::size_t>(bins), 0);
    std::int64_t idx[8];
    g.cell_coords(source_cell, idx);
    double src[8];
    for (int j = 0; j < g.d; ++j) src[j] = g.center(idx[j]);
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        if (geo.label[static_cast<std::size_t>(c)] >= 0) continue;
        g.cell_coords(c, idx);
        double pt[8];
        for (int j = 0; j < g.d; ++j) pt[j] = g.center(idx[j]);
        const double r = periodic_distance({pt, static_cast<std::size_t>(g.d)},
                                           {src, static_cast<std::size_t>(g.d)}, g.L());
        if (r < r_lo || r >= r_hi) continue;
        const auto b = static_cast<std::size_t>(std::log(r / r_lo) / std::log(r_hi / r_lo) *
                                                static_cast<double>(bins));
        const double a = std::abs(res.u[A.dofs.dof[static_cast<std::size_t>(c)]]);
        if (a > 0.0) {
            sum[b] += std::log(a);
            ++cnt[b];
        }
    }
    std::vector<double> xs, ys;
    for (int b = 0; b < bins; ++b) {
        if (cnt[static_cast<std::size_t>(b)] == 0) continue;
        const double rmid =
            r_lo * std::pow(r_hi / r_lo, (static_cast<double>(b) + 0.5) / bins);
        xs.push_back(std::log(rmid));
        ys.push_back(sum[static_cast<std::size_t>(b)] /
                     static_cast<double>(cnt[static_cast<std::size_t>(b)]));
    }
    if (xs.size() < 3) throw solver_error("decay fit: fewer than 3 populated shells");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    decay_fit fit;
    fit.slope = sxy / sxx;
    fit.r_lo = r_lo;
    fit.r_hi = r_hi;
    fit.bins_used = static_cast<int>(xs.size());
    return fit;
}

}  // namespace screed
