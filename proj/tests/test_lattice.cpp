#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <queue>
#include <set>

#include "screed/lattice.hpp"
#include "screed/points.hpp"
#include "screed/rng.hpp"

using namespace screed;

namespace {

point_set make_set(int d, double L, double rho, std::vector<double> coords) {
    point_set ps;
    ps.d = d;
    ps.L = L;
    ps.rho = rho;
    ps.x = std::move(coords);
    return ps;
}

// collect all cells of inclusion i
std::vector<std::int64_t> cells_of(const geometry& geo, std::int32_t i) {
    std::vector<std::int64_t> v;
    for (std::int64_t c = 0; c < geo.g.cells(); ++c)
        if (geo.label[static_cast<std::size_t>(c)] == i) v.push_back(c);
    return v;
}

bool face_connected(const geometry& geo, std::int32_t i) {
    auto cells = cells_of(geo, i);
    if (cells.empty()) return false;
    std::set<std::int64_t> pending(cells.begin(), cells.end());
    std::queue<std::int64_t> q;
    q.push(*pending.begin());
    pending.erase(pending.begin());
    std::int64_t idx[8];
    while (!q.empty()) {
        std::int64_t c = q.front();
        q.pop();
        geo.g.cell_coords(c, idx);
        for (int j = 0; j < geo.g.d; ++j) {
            for (int s : {-1, 1}) {
                std::int64_t save = idx[j];
                idx[j] = geo.g.wrap(idx[j] + s);
                std::int64_t nb = geo.g.cell_index(idx);
                idx[j] = save;
                auto it = pending.find(nb);
                if (it != pending.end()) {
                    pending.erase(it);
                    q.push(nb);
                }
            }
        }
    }
    return pending.empty();
}

// periodic Chebyshev distance between cell multi-indices
std::int64_t chebyshev(const grid& g, std::int64_t a, std::int64_t b) {
    std::int64_t ia[8], ib[8];
    g.cell_coords(a, ia);
    g.cell_coords(b, ib);
    std::int64_t m = 0;
    for (int j = 0; j < g.d; ++j) {
        std::int64_t dj = std::abs(ia[j] - ib[j]);
        dj = std::min(dj, g.n - dj);
        m = std::max(m, dj);
    }
    return m;
}

}  // namespace

TEST_CASE("unit ball radius closed forms", "[lattice]") {
    CHECK_THAT(unit_ball_radius(1), Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(unit_ball_radius(2),
               Catch::Matchers::WithinAbs(1.0 / std::sqrt(std::numbers::pi), 1e-12));
    CHECK_THAT(unit_ball_radius(3),
               Catch::Matchers::WithinAbs(std::cbrt(3.0 / (4.0 * std::numbers::pi)), 1e-12));
    CHECK_THROWS_AS(unit_ball_radius(0), usage_error);
}

TEST_CASE("grid index round trip", "[lattice]") {
    for (int d = 1; d <= 5; ++d) {
        grid g(d, 7, 0.5);
        rng rn(d);
        std::int64_t idx[8], idx2[8];
        for (int rep = 0; rep < 50; ++rep) {
            for (int j = 0; j < d; ++j)
                idx[j] = static_cast<std::int64_t>(rn.uniform(0.0, 7.0)) % 7;
            std::int64_t c = g.cell_index(idx);
            REQUIRE(c >= 0);
            REQUIRE(c < g.cells());
            g.cell_coords(c, idx2);
            for (int j = 0; j < d; ++j) REQUIRE(idx[j] == idx2[j]);
        }
    }
}

TEST_CASE("empty point set rasterizes to all fluid", "[lattice]") {
    grid g(3, 16, 0.25);
    auto geo = rasterize(make_set(3, 4.0, 3.0, {}), g);
    CHECK(geo.inclusions() == 0);
    CHECK(geo.theta_h == 0.0);
    CHECK(geo.fluid_cells == g.cells());
}

TEST_CASE("single inclusion volume near 1", "[lattice]") {
    grid g(3, 40, 0.1);
    auto geo = rasterize(make_set(3, 4.0, 3.0, {2.0, 2.0, 2.0}), g);
    REQUIRE(geo.inclusions() == 1);
    CHECK(geo.inclusion_volume[0] >= 0.93);
    CHECK(geo.inclusion_volume[0] <= 1.07);
    CHECK(geo.theta_h == static_cast<double>(geo.inclusion_cells[0]) / g.cells());
}

TEST_CASE("volume error shrinks like h", "[lattice]") {
    // |vol - 1| <= c*h with c = 1.2, and the worst error shrinks with h
    rng rn(5150);
    double worst_prev = 1e9;
    for (double h : {0.5, 0.25, 0.125}) {
        auto n = static_cast<std::int64_t>(std::llround(8.0 / h));
        grid g(3, n, h);
        double worst = 0.0;
        for (int rep = 0; rep < 40; ++rep) {
            std::vector<double> p = {rn.uniform(0.0, 8.0), rn.uniform(0.0, 8.0),
                                     rn.uniform(0.0, 8.0)};
            auto geo = rasterize(make_set(3, 8.0, 3.0, p), g);
            worst = std::max(worst, std::abs(geo.inclusion_volume[0] - 1.0));
        }
        CHECK(worst <= 1.2 * h);
        CHECK(worst < worst_prev);
        worst_prev = worst;
    }
}

TEST_CASE("two inclusions at distance rho stay separated by fluid", "[lattice]") {
    grid g(3, 48, 0.25);
    auto geo = rasterize(make_set(3, 12.0, 3.0, {3.0, 6.0, 6.0, 6.0, 6.0, 6.0}), g);
    REQUIRE(geo.inclusions() == 2);
    auto a = cells_of(geo, 0), b = cells_of(geo, 1);
    REQUIRE(!a.empty());
    REQUIRE(!b.empty());
    std::int64_t gap = 1000;
    for (auto ca : a)
        for (auto cb : b) gap = std::min(gap, chebyshev(g, ca, cb));
    CHECK(gap >= 2);  // at least one full fluid cell between the label sets
}

TEST_CASE("inclusion cell sets are face-connected", "[lattice]") {
    auto ps = sample_hardcore_poisson(3, 8.0, 3.0, 1.0, 31);
    REQUIRE(ps.size() >= 2);
    grid g(3, 32, 0.25);
    auto geo = rasterize(ps, g);
    for (std::size_t i = 0; i < geo.inclusions(); ++i)
        CHECK(face_connected(geo, static_cast<std::int32_t>(i)));
}

TEST_CASE("rasterization is translation-covariant on the lattice", "[lattice]") {
    auto ps = sample_hardcore_poisson(3, 8.0, 3.0, 1.0, 77);
    REQUIRE(ps.size() >= 2);
    grid g(3, 32, 0.25);
    auto base = rasterize(ps, g);

    const std::int64_t shift[3] = {3, -7, 1};  // cells
    point_set moved = ps;
    for (std::size_t i = 0; i < moved.size(); ++i)
        for (int j = 0; j < 3; ++j) {
            double& c = moved.x[3 * i + j];
            c += static_cast<double>(shift[j]) * g.h;  // exact: h is dyadic
            if (c >= 8.0) c -= 8.0;
            if (c < 0.0) c += 8.0;
        }
    auto shifted = rasterize(moved, g);

    std::int64_t idx[8], jdx[8];
    for (std::int64_t c = 0; c < g.cells(); ++c) {
        g.cell_coords(c, idx);
        for (int j = 0; j < 3; ++j) jdx[j] = g.wrap(idx[j] + shift[j]);
        REQUIRE(shifted.label[static_cast<std::size_t>(g.cell_index(jdx))] ==
                base.label[static_cast<std::size_t>(c)]);
    }
}

TEST_CASE("coarse-grid fallback labels the covering cell", "[lattice]") {
    grid g(3, 8, 1.0);  // h = 1 > r_3/2: center-in-ball can miss entirely
    auto geo = rasterize(make_set(3, 8.0, 4.0, {1.0, 1.0, 1.0}), g);
    REQUIRE(geo.inclusions() == 1);
    CHECK(geo.inclusion_cells[0] == 1);
    CHECK(geo.inclusion_volume[0] == 1.0);
    std::int64_t idx[3] = {1, 1, 1};
    CHECK(geo.label[static_cast<std::size_t>(g.cell_index(idx))] == 0);
}

TEST_CASE("overlapping inclusions are rejected", "[lattice]") {
    grid g(3, 32, 0.25);
    CHECK_THROWS_AS(rasterize(make_set(3, 8.0, 3.0, {4.0, 4.0, 4.0, 4.5, 4.0, 4.0}), g),
                    usage_error);
}

TEST_CASE("box side mismatch is rejected", "[lattice]") {
    grid g(3, 32, 0.25);
    CHECK_THROWS_AS(rasterize(make_set(3, 9.0, 3.0, {}), g), usage_error);
}
