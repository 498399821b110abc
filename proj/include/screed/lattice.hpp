#pragma once

// Periodic lattice bookkeeping and rasterization of unit-volume balls.
// A cell belongs to inclusion i when its center lies within r_d of x_i in the
// periodic metric.  On grids too coarse for that rule (h > r_d/2, used only by
// the linearized models) an inclusion whose ball captures no center falls back
// to the single cell containing it, so every inclusion owns >= 1 cell.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "screed/core.hpp"
#include "screed/points.hpp"

namespace screed {

// radius r_d with omega_d * r_d^d = 1
inline double unit_ball_radius(int d) {
    if (d < 1) throw usage_error("unit_ball_radius: dimension must be >= 1");
    return std::pow(std::tgamma(0.5 * d + 1.0), 1.0 / d) / std::sqrt(std::numbers::pi);
}

struct grid {
    int d = 0;
    std::int64_t n = 0;
    double h = 0.0;

    grid() = default;
    grid(int d_, std::int64_t n_, double h_) : d(d_), n(n_), h(h_) {
        if (d < 1 || d > 8) throw usage_error("grid: dimension must be in [1, 8]");
        if (n < 2) throw usage_error("grid: need at least 2 cells per side");
        if (!(h > 0.0)) throw usage_error("grid: spacing must be positive");
        if (ipow(n, d) > (std::int64_t{1} << 40))
            throw resource_error("grid: cell count exceeds addressable budget");
    }

    double L() const { return static_cast<double>(n) * h; }
    std::int64_t cells() const { return ipow(n, d); }

    // row-major: the last coordinate varies fastest
    std::int64_t cell_index(const std::int64_t* idx) const {
        std::int64_t c = 0;
        for (int j = 0; j < d; ++j) c = c * n + idx[j];
        return c;
    }
    void cell_coords(std::int64_t cell, std::int64_t* idx) const {
        for (int j = d - 1; j >= 0; --j) {
            idx[j] = cell % n;
            cell /= n;
        }
    }
    double center(std::int64_t i) const { return (static_cast<double>(i) + 0.5) * h; }
    std::int64_t wrap(std::int64_t i) const {
        i %= n;
        return i < 0 ? i + n : i;
    }
};

struct geometry {
    grid g;
    double r_d = 0.0;
    std::vector<std::int32_t> label;  // -1 fluid, else inclusion id
    std::vector<std::int64_t> inclusion_cells;
    std::vector<double> inclusion_volume;
    std::vector<double> centers;  // inclusions() * d
    std::int64_t fluid_cells = 0;
    double theta_h = 0.0;

    std::size_t inclusions() const { return inclusion_cells.size(); }
    double total_inclusion_volume() const {
        double s = 0.0;
        for (double v : inclusion_volume) s += v;
        return s;
    }
    std::span<const double> center_of(std::size_t i) const {
        return {centers.data() + static_cast<std::size_t>(g.d) * i,
                static_cast<std::size_t>(g.d)};
    }
};

// periodic distance from the center of `cell` to point p
inline double cell_point_distance(const grid& g, std::int64_t cell, std::span<const double> p) {
    std::int64_t idx[8];
    g.cell_coords(cell, idx);
    double s = 0.0;
    for (int j = 0; j < g.d; ++j) {
        double dj = periodic_delta(g.center(idx[j]), p[j], g.L());
        s += dj * dj;
    }
    return std::sqrt(s);
}

inline geometry rasterize(const point_set& ps, const grid& g) {
    if (ps.d != g.d) throw usage_error("rasterize: dimension mismatch");
    if (std::abs(ps.L - g.L()) > 1e-9 * g.L())
        throw usage_error("rasterize: point-set box side " + std::to_string(ps.L) +
                          " does not match grid side " + std::to_string(g.L()));

    geometry geo;
    geo.g = g;
    geo.r_d = unit_ball_radius(g.d);
    geo.label.assign(static_cast<std::size_t>(g.cells()), -1);
    geo.centers = ps.x;
    const std::size_t ninc = ps.size();
    geo.inclusion_cells.assign(ninc, 0);
    geo.inclusion_volume.assign(ninc, 0.0);

    const double hd = std::pow(g.h, g.d);
    std::int64_t lo[8], span[8], idx[8];
    for (std::size_t i = 0; i < ninc; ++i) {
        auto x = ps.point(i);
        for (int j = 0; j < g.d; ++j) {
            lo[j] = static_cast<std::int64_t>(std::floor((x[j] - geo.r_d) / g.h - 0.5));
            auto hi = static_cast<std::int64_t>(std::ceil((x[j] + geo.r_d) / g.h - 0.5));
            span[j] = std::min(hi - lo[j] + 1, g.n);
        }
        std::int64_t cnt = 0;
        std::int64_t off[8] = {0};
        while (true) {
            double dist2 = 0.0;
            for (int j = 0; j < g.d; ++j) {
                idx[j] = g.wrap(lo[j] + off[j]);
                double dj = periodic_delta(g.center(lo[j] + off[j]), x[j], g.L());
                dist2 += dj * dj;
            }
            if (dist2 < geo.r_d * geo.r_d) {
                std::int64_t cell = g.cell_index(idx);
                auto& lab = geo.label[static_cast<std::size_t>(cell)];
                if (lab != -1)
                    throw usage_error("rasterize: inclusions " + std::to_string(lab) + " and " +
                                      std::to_string(i) + " overlap in cell " +
                                      std::to_string(cell));
                lab = static_cast<std::int32_t>(i);
                ++cnt;
            }
            int j = g.d - 1;
            while (j >= 0 && off[j] == span[j] - 1) off[j--] = 0;
            if (j < 0) break;
            ++off[j];
        }
        if (cnt == 0) {
            // coarse-grid fallback: the cell containing the center
            for (int j = 0; j < g.d; ++j)
                idx[j] = g.wrap(static_cast<std::int64_t>(std::floor(x[j] / g.h)));
            std::int64_t cell = g.cell_index(idx);
            auto& lab = geo.label[static_cast<std::size_t>(cell)];
            if (lab != -1)
                throw usage_error("rasterize: fallback cell of inclusion " + std::to_string(i) +
                                  " already labeled " + std::to_string(lab));
            lab = static_cast<std::int32_t>(i);
            cnt = 1;
        }
        geo.inclusion_cells[i] = cnt;
        geo.inclusion_volume[i] = static_cast<double>(cnt) * hd;
    }

    std::int64_t covered = 0;
    for (std::size_t i = 0; i < ninc; ++i) covered += geo.inclusion_cells[i];
    geo.fluid_cells = g.cells() - covered;
    geo.theta_h = static_cast<double>(covered) / static_cast<double>(g.cells());
    return geo;
}

}  // namespace screed
