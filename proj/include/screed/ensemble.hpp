#pragma once

// Ensemble driver: sample many independent configurations, solve each one,
// and aggregate effective-field / variance / energy statistics with
// deterministic results that do not depend on the worker-thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "screed/core.hpp"
#include "screed/corrector.hpp"
#include "screed/lattice.hpp"
#include "screed/points.hpp"
#include "screed/rng.hpp"
#include "screed/spectral.hpp"
#include "screed/stats.hpp"

namespace screed {

enum class run_mode { nonlinear, linearized, green, divform };

inline const char* to_string(run_mode m) {
    switch (m) {
        case run_mode::nonlinear: return "nonlinear";
        case run_mode::linearized: return "linearized";
        case run_mode::green: return "green";
        case run_mode::divform: return "divform";
    }
    return "?";
}

inline run_mode parse_run_mode(const std::string& s) {
    if (s == "nonlinear") return run_mode::nonlinear;
    if (s == "linearized") return run_mode::linearized;
    if (s == "green") return run_mode::green;
    if (s == "divform") return run_mode::divform;
    throw usage_error("unknown mode '" + s +
                      "' (expected nonlinear, linearized, green, or divform)");
}

struct run_config {
    int d = 3;
    std::int64_t n = 0;  // cells per side; 0 = derive from L and h
    double L = 0.0;      // box side; 0 = derive from n and h
    double h = 0.0;      // spacing; 0 = derive from n and L
    double T = 1.0;
    double rho = 2.0;     // hardcore diameter
    double lambda = 0.0;  // candidate intensity (hardcore Poisson)
    bool parking = false;
    double gbar = -1.0;
    std::int64_t realizations = 1;
    std::uint64_t master_seed = 1;
    double cg_tol = 1e-10;
    std::int64_t cg_maxit = 0;  // 0 = automatic
    double box_rule = 0.0;      // if > 0, require L >= box_rule * sqrt(T)
    run_mode mode = run_mode::nonlinear;
    int threads = 1;
    int direction = 0;  // div-form source direction
    std::uint64_t mem_budget_bytes = 3'500'000'000ull;
};

inline grid resolve_grid(const run_config& cfg) {
    if (cfg.d < 2 || cfg.d > 8) throw usage_error("run: dimension must be in [2, 8]");
    if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) throw usage_error("run: T must be positive");
    if (cfg.realizations < 1) throw usage_error("run: need at least one realization");
    if (!(cfg.rho > 0.0)) throw usage_error("run: hardcore diameter must be positive");
    if (cfg.lambda < 0.0) throw usage_error("run: intensity must be >= 0");
    if (!std::isfinite(cfg.gbar)) throw usage_error("run: gbar must be finite");
    if (!(cfg.cg_tol > 0.0) || cfg.cg_tol >= 1.0)
        throw usage_error("run: cg_tol must lie in (0, 1)");
    if (cfg.threads < 1) throw usage_error("run: threads must be >= 1");
    if (cfg.direction < 0 || cfg.direction >= cfg.d)
        throw usage_error("run: direction out of range");

    std::int64_t n = cfg.n;
    double h = cfg.h;
    if (n > 0 && h > 0.0) {
        if (cfg.L > 0.0 && std::abs(static_cast<double>(n) * h - cfg.L) > 1e-9 * cfg.L)
            throw usage_error("run: inconsistent grid (n * h != L)");
    } else if (cfg.L > 0.0 && h > 0.0) {
        n = std::llround(cfg.L / h);
        if (n < 2 || std::abs(static_cast<double>(n) * h - cfg.L) > 1e-9 * cfg.L)
            throw usage_error("run: box side is not an integer multiple of the spacing");
    } else if (cfg.L > 0.0 && n > 0) {
        h = cfg.L / static_cast<double>(n);
    } else {
        throw usage_error("run: grid underdetermined (give two of n, L, h)");
    }
    grid g(cfg.d, n, h);
    if (cfg.box_rule > 0.0) {
        const double need = cfg.box_rule * std::sqrt(cfg.T);
        if (g.L() < need * (1.0 - 1e-12))
            throw usage_error("run: box side " + std::to_string(g.L()) +
                              " violates the screening-length rule (need >= " +
                              std::to_string(need) + ")");
    }
    return g;
}

// Conservative peak-memory estimate: solver work arrays dominate and scale
// with cells() per concurrently running realization.
inline std::uint64_t estimate_memory_bytes(const run_config& cfg, const grid& g) {
    const auto cells = static_cast<std::uint64_t>(g.cells());
    const auto workers = static_cast<std::uint64_t>(
        std::min<std::int64_t>(cfg.threads, cfg.realizations));
    const std::uint64_t per_cell = 80;  // CG/FFT vectors + index maps, rounded up
    return cells * per_cell * workers + cells * 16;
}

struct ensemble_stats {
    // Volume-weighted mean inclusion value, averaged over realizations.
    double u_bar = 0.0;
    double u_bar_se = 0.0;
    // Variance statistic. Nonlinear mode: pooled population variance of the
    // per-inclusion values over all inclusions of all realizations, with a
    // drop-one-realization jackknife standard error. Linearized / div-form
    // modes: the fields are exactly mean-zero, so the box average of the
    // squared field is their variance; we report its realization mean and
    // standard error.
    double var_ui = 0.0;
    double var_ui_se = 0.0;
    // Box-averaged energies (realization means).
    double mean_energy_massive = 0.0;
    double mean_energy_dirichlet = 0.0;
    // Worst relative identity residuals over all realizations: mean-zero
    // defect and energy-balance defect (nonlinear), field-mean and Parseval
    // defect (spectral modes).
    double identity_mean0 = 0.0;
    double identity_energy = 0.0;
    std::int64_t realizations_used = 0;  // realizations with >= 1 inclusion
    std::int64_t degenerate = 0;         // realizations with no inclusions
    double mean_iterations = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

struct realization_record {
    bool degenerate = false;
    std::int64_t n_inclusions = 0;
    double u_bar = 0.0;
    pool_moment incl;
    double energy_massive = 0.0;
    double energy_dirichlet = 0.0;
    double mean_sq = 0.0;
    double identity_mean0 = 0.0;
    double identity_energy = 0.0;
    double iterations = 0.0;
};

inline realization_record run_one(const run_config& cfg, const grid& g, std::int64_t r) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(r));
    point_set ps = cfg.parking
                       ? sample_random_parking(cfg.d, g.L(), cfg.rho, seed)
                       : sample_hardcore_poisson(cfg.d, g.L(), cfg.rho, cfg.lambda, seed);
    geometry geo = rasterize(ps, g);

    realization_record rec;
    rec.n_inclusions = static_cast<std::int64_t>(geo.inclusions());
    rec.degenerate = rec.n_inclusions == 0;

    if (cfg.mode == run_mode::nonlinear) {
        operator_spec A = make_operator(geo, cfg.T);
        cg_options opts;
        opts.tol = cfg.cg_tol;
        opts.maxit = cfg.cg_maxit;
        solve_result res;
        try {
            res = solve_corrector(A, cfg.gbar, opts);
        } catch (const nonconvergence_error& e) {
            throw solver_error("ensemble: realization " + std::to_string(r) + " (seed " +
                               std::to_string(seed) + ") did not converge: " + e.what());
        }
        identity_report rep = check_identities(A, cfg.gbar, res);
        const double vol = std::pow(g.L(), g.d);
        rec.energy_massive = res.energy_massive / vol;
        rec.energy_dirichlet = res.energy_dirichlet / vol;
        rec.identity_mean0 = rep.mean0_rel;
        rec.identity_energy = rep.energy_rel;
        rec.iterations = static_cast<double>(res.iterations);
        if (!rec.degenerate) {
            rec.u_bar = rep.u_bar_box;
            rec.incl.count = rec.n_inclusions;
            for (double ui : res.inclusion_values) {
                rec.incl.sum += ui;
                rec.incl.sumsq += ui * ui;
            }
        }
        return rec;
    }

    spectral_field v = cfg.mode == run_mode::linearized
                           ? solve_linearized_fft(g, geo, cfg.T)
                           : solve_divform_fft(g, geo, cfg.T, cfg.direction);
    rec.mean_sq = field_mean_sq(v);
    coulomb_parts parts = coulomb_energy(v, cfg.T);
    rec.energy_massive = parts.massive;
    rec.energy_dirichlet = parts.dirichlet;
    rec.identity_mean0 =
        rec.mean_sq > 0.0 ? std::abs(field_mean(v)) / std::sqrt(rec.mean_sq) : 0.0;
    if (rec.mean_sq > 0.0) {
        const double parseval = spectral_norm_sq(v);
        rec.identity_energy = std::abs(parseval - rec.mean_sq) / rec.mean_sq;
    }
    return rec;
}

inline std::vector<realization_record> run_all(const run_config& cfg, const grid& g) {
    const std::int64_t R = cfg.realizations;
    std::vector<realization_record> recs(static_cast<std::size_t>(R));
    std::vector<std::exception_ptr> errs(static_cast<std::size_t>(R));
    const int workers = static_cast<int>(std::min<std::int64_t>(cfg.threads, R));
    std::atomic<std::int64_t> next{0};
    auto body = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= R) return;
            try {
                recs[static_cast<std::size_t>(i)] = run_one(cfg, g, i);
            } catch (...) {
                errs[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& t : pool) t.join();
    }
    // Report failures in realization order so the outcome does not depend on
    // the thread count.
    for (const auto& e : errs)
        if (e) std::rethrow_exception(e);
    return recs;
}

}  // namespace detail

inline ensemble_stats run_ensemble(const run_config& cfg) {
    if (cfg.mode == run_mode::green)
        throw usage_error("run_ensemble: green mode is a single-field driver, not an ensemble");
    const grid g = resolve_grid(cfg);
    if (estimate_memory_bytes(cfg, g) > cfg.mem_budget_bytes)
        throw resource_error("run_ensemble: estimated memory exceeds the budget for grid n=" +
                             std::to_string(g.n));

    const auto recs = detail::run_all(cfg, g);

    ensemble_stats st;
    std::vector<double> ubars, msqs, energies_m, energies_d, iters;
    std::vector<pool_moment> moments;
    for (std::int64_t r = 0; r < cfg.realizations; ++r) {
        const auto& rec = recs[static_cast<std::size_t>(r)];
        st.identity_mean0 = std::max(st.identity_mean0, rec.identity_mean0);
        st.identity_energy = std::max(st.identity_energy, rec.identity_energy);
        energies_m.push_back(rec.energy_massive);
        energies_d.push_back(rec.energy_dirichlet);
        iters.push_back(rec.iterations);
        msqs.push_back(rec.mean_sq);
        if (rec.degenerate) {
            ++st.degenerate;
            st.warnings.push_back("realization " + std::to_string(r) + " (seed " +
                                  std::to_string(derive_seed(cfg.master_seed,
                                                             static_cast<std::uint64_t>(r))) +
                                  ") has no inclusions; excluded from inclusion statistics");
            continue;
        }
        ++st.realizations_used;
        ubars.push_back(rec.u_bar);
        moments.push_back(rec.incl);
    }
    st.mean_energy_massive = mean_and_se(energies_m).mean;
    st.mean_energy_dirichlet = mean_and_se(energies_d).mean;
    st.mean_iterations = mean_and_se(iters).mean;

    if (cfg.mode == run_mode::nonlinear) {
        if (st.realizations_used == 0)
            throw usage_error("run_ensemble: all realizations have zero inclusions; "
                              "the effective field is undefined");
        const sample_stats ub = mean_and_se(ubars);
        st.u_bar = ub.mean;
        st.u_bar_se = ub.se;
        st.var_ui = pooled_variance(moments);
        st.var_ui_se = pooled_variance_jackknife_se(moments);
    } else {
        // Mean-zero fields: the box average of v^2 is the variance statistic;
        // empty configurations legitimately contribute zero.
        const sample_stats vs = mean_and_se(msqs);
        st.var_ui = vs.mean;
        st.var_ui_se = vs.se;
    }
    return st;
}

struct sweep_row {
    double T = 0.0;
    std::int64_t n = 0;
    double L = 0.0;
    ensemble_stats stats;
};

// Sweep over an increasing list of T values. With box_rule > 0 and a pinned
// spacing the grid is enlarged per entry to keep L >= box_rule * sqrt(T); the
// memory guard covers every grid before any solve starts. A single-entry
// sweep reproduces run_ensemble exactly, so later entries decorrelate their
// streams by re-deriving the master seed from the entry index.
inline std::vector<sweep_row> sweep_T(const run_config& cfg, std::span<const double> Ts) {
    if (Ts.empty()) throw usage_error("sweep: need at least one T value");
    for (std::size_t i = 0; i < Ts.size(); ++i) {
        if (!(Ts[i] > 0.0) || !std::isfinite(Ts[i]))
            throw usage_error("sweep: T values must be positive");
        if (i > 0 && Ts[i] <= Ts[i - 1])
            throw usage_error("sweep: T values must be strictly increasing");
    }

    std::vector<run_config> cfgs;
    std::vector<grid> grids;
    for (std::size_t i = 0; i < Ts.size(); ++i) {
        run_config c = cfg;
        c.T = Ts[i];
        if (i > 0) c.master_seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
        if (cfg.box_rule > 0.0) {
            if (!(cfg.h > 0.0))
                throw usage_error("sweep: box_rule grids need a pinned spacing h");
            const double need = cfg.box_rule * std::sqrt(c.T) / cfg.h;
            c.n = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil(need - 1e-12)));
            c.L = 0.0;
        }
        grids.push_back(resolve_grid(c));
        cfgs.push_back(c);
    }
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        if (estimate_memory_bytes(cfgs[i], grids[i]) > cfg.mem_budget_bytes)
            throw resource_error("sweep: estimated memory exceeds the budget at T=" +
                                 std::to_string(Ts[i]) + " (grid n=" +
                                 std::to_string(grids[i].n) + ")");
    }

    std::vector<sweep_row> rows;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        sweep_row row;
        row.T = Ts[i];
        row.n = grids[i].n;
        row.L = grids[i].L();
        row.stats = run_ensemble(cfgs[i]);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace screed
