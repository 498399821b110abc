#pragma once

// Hardcore point processes in a periodic box via the Penrose graphical
// construction: a space-time Poisson candidate stream (location, arrival mark)
// is thinned by the rule "accept iff every conflicting candidate with an
// earlier mark was rejected".  Truncating the mark axis at a finite horizon
// lambda gives the hardcore Poisson process; letting the horizon run to
// saturation gives random parking (sequential adsorption).
//
// Processing candidates in increasing-mark order turns the recursive rule
// into a sweep: accept iff no already-accepted point lies within rho.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "screed/core.hpp"
#include "screed/rng.hpp"

namespace screed {

enum class process_kind { hardcore_poisson, random_parking };

inline const char* to_string(process_kind k) {
    return k == process_kind::hardcore_poisson ? "hardcore_poisson" : "random_parking";
}

struct marked_candidates {
    int d = 0;
    double L = 0.0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> x;     // size() * d, candidate-major
    std::vector<double> mark;  // increasing by construction

    std::size_t size() const { return mark.size(); }
    std::span<const double> point(std::size_t i) const {
        return {x.data() + static_cast<std::size_t>(d) * i, static_cast<std::size_t>(d)};
    }
};

struct point_set {
    int d = 0;
    double L = 0.0;
    double rho = 0.0;
    double lambda = 0.0;            // mark horizon (for parking: the achieved one)
    double achieved_horizon = 0.0;  // last mark processed
    std::uint64_t seed = 0;
    process_kind kind = process_kind::hardcore_poisson;
    bool budget_exhausted = false;
    std::vector<double> x;  // size() * d

    std::size_t size() const { return x.size() / std::max(1, d); }
    std::span<const double> point(std::size_t i) const {
        return {x.data() + static_cast<std::size_t>(d) * i, static_cast<std::size_t>(d)};
    }
    double volume() const { return std::pow(L, d); }
    double intensity() const { return static_cast<double>(size()) / volume(); }
};

// Candidate-budget exhaustion; carries the partial configuration.
struct budget_error : resource_error {
    point_set partial;
    budget_error(const std::string& msg, point_set p)
        : resource_error(msg), partial(std::move(p)) {}
};

namespace detail {

// Spatial hash with bin width >= rho, so conflict queries only visit the
// 3^d neighbor bins.  Falls back to a linear scan when the box is too small
// for distinct wrapped neighbors.
class cell_list {
  public:
    cell_list(int d, double L, double rho) : d_(d), L_(L), rho_(rho) {
        nb_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(L / rho)));
        brute_ = nb_ < 3;
        width_ = L / static_cast<double>(nb_);
        if (!brute_) bins_.resize(static_cast<std::size_t>(ipow(nb_, d)));
    }

    std::size_t size() const { return pts_.size() / d_; }

    void insert(std::span<const double> p) {
        pts_.insert(pts_.end(), p.begin(), p.end());
        if (!brute_) bins_[bin_of(p)].push_back(size() - 1);
    }

    bool conflicts(std::span<const double> p) const {
        const double r2 = rho_ * rho_;
        if (brute_) {
            for (std::size_t i = 0; i < size(); ++i)
                if (periodic_distance_sq(point(i), p, L_) < r2) return true;
            return false;
        }
        std::int64_t base[8];
        for (int j = 0; j < d_; ++j) base[j] = coord_bin(p[j]);
        std::int64_t off[8] = {0};
        for (int j = 0; j < d_; ++j) off[j] = -1;
        while (true) {
            std::size_t flat = 0;
            for (int j = 0; j < d_; ++j) {
                std::int64_t b = base[j] + off[j];
                if (b < 0) b += nb_;
                if (b >= nb_) b -= nb_;
                flat = flat * nb_ + static_cast<std::size_t>(b);
            }
            for (std::size_t i : bins_[flat])
                if (periodic_distance_sq(point(i), p, L_) < r2) return true;
            int j = d_ - 1;
            while (j >= 0 && off[j] == 1) off[j--] = -1;
            if (j < 0) break;
            ++off[j];
        }
        return false;
    }

  private:
    std::span<const double> point(std::size_t i) const {
        return {pts_.data() + static_cast<std::size_t>(d_) * i, static_cast<std::size_t>(d_)};
    }
    std::int64_t coord_bin(double c) const {
        auto b = static_cast<std::int64_t>(c / width_);
        return std::min(b, nb_ - 1);
    }
    std::size_t bin_of(std::span<const double> p) const {
        std::size_t flat = 0;
        for (int j = 0; j < d_; ++j) flat = flat * nb_ + static_cast<std::size_t>(coord_bin(p[j]));
        return flat;
    }

    int d_;
    double L_, rho_, width_;
    std::int64_t nb_;
    bool brute_;
    std::vector<double> pts_;
    std::vector<std::vector<std::uint32_t>> bins_;
};

inline void check_box(int d, double L, double lambda, double rho) {
    if (d < 1 || d > 8) throw usage_error("dimension must be in [1, 8], got " + std::to_string(d));
    if (!(L > 0.0)) throw usage_error("box side must be positive, got " + std::to_string(L));
    if (lambda < 0.0) throw usage_error("mark horizon must be >= 0, got " + std::to_string(lambda));
    if (!(rho > 0.0)) throw usage_error("hardcore radius must be positive, got " + std::to_string(rho));
}

}  // namespace detail

inline marked_candidates sample_poisson_marks(int d, double L, double lambda, std::uint64_t seed) {
    detail::check_box(d, L, lambda, 1.0);
    marked_candidates mc;
    mc.d = d;
    mc.L = L;
    mc.lambda = lambda;
    mc.seed = seed;
    rng g(seed);
    const double rate = std::pow(L, d);  // candidates per unit mark in the box
    double t = 0.0;
    while (true) {
        t += g.exponential(rate);
        if (t > lambda) break;
        mc.mark.push_back(t);
        for (int j = 0; j < d; ++j) {
            double c = g.uniform(0.0, L);
            if (c >= L) c = 0.0;
            mc.x.push_back(c);
        }
    }
    return mc;
}

inline point_set penrose_accept(const marked_candidates& cands, double rho) {
    if (!(rho > 0.0)) throw usage_error("hardcore radius must be positive");
    std::vector<std::uint32_t> order(cands.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (cands.mark[a] != cands.mark[b]) return cands.mark[a] < cands.mark[b];
        auto pa = cands.point(a), pb = cands.point(b);
        return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
    });

    point_set ps;
    ps.d = cands.d;
    ps.L = cands.L;
    ps.rho = rho;
    ps.lambda = cands.lambda;
    ps.achieved_horizon = cands.lambda;
    ps.seed = cands.seed;
    detail::cell_list accepted(cands.d, cands.L, rho);
    for (std::uint32_t i : order) {
        auto p = cands.point(i);
        if (!accepted.conflicts(p)) {
            accepted.insert(p);
            ps.x.insert(ps.x.end(), p.begin(), p.end());
        }
    }
    return ps;
}

inline point_set sample_hardcore_poisson(int d, double L, double rho, double lambda,
                                         std::uint64_t seed) {
    detail::check_box(d, L, lambda, rho);
    point_set ps = penrose_accept(sample_poisson_marks(d, L, lambda, seed), rho);
    ps.kind = process_kind::hardcore_poisson;
    return ps;
}

struct parking_options {
    double lambda_max = std::numeric_limits<double>::infinity();
    double streak_factor = 10.0;  // stop after streak_factor * L^d consecutive rejections
    std::uint64_t candidate_budget = 50'000'000;
};

// Random parking: run the same candidate stream until the mark horizon or a
// long no-acceptance streak signals (approximate) saturation.
inline point_set sample_random_parking(int d, double L, double rho, std::uint64_t seed,
                                       const parking_options& opts = {}) {
    detail::check_box(d, L, 0.0, rho);
    point_set ps;
    ps.d = d;
    ps.L = L;
    ps.rho = rho;
    ps.seed = seed;
    ps.kind = process_kind::random_parking;

    rng g(seed);
    const double rate = std::pow(L, d);
    const auto streak_limit =
        static_cast<std::uint64_t>(std::ceil(opts.streak_factor * rate));
    detail::cell_list accepted(d, L, rho);
    double t = 0.0;
    double p[8];
    std::uint64_t processed = 0, streak = 0;
    while (t < opts.lambda_max && streak < streak_limit) {
        if (processed >= opts.candidate_budget) {
            ps.lambda = ps.achieved_horizon = t;
            ps.budget_exhausted = true;
            throw budget_error("random parking exceeded candidate budget " +
                                   std::to_string(opts.candidate_budget) +
                                   " at mark horizon " + std::to_string(t),
                               std::move(ps));
        }
        t += g.exponential(rate);
        if (t > opts.lambda_max) break;
        ++processed;
        for (int j = 0; j < d; ++j) {
            p[j] = g.uniform(0.0, L);
            if (p[j] >= L) p[j] = 0.0;
        }
        std::span<const double> pt(p, static_cast<std::size_t>(d));
        if (accepted.conflicts(pt)) {
            ++streak;
        } else {
            streak = 0;
            accepted.insert(pt);
            ps.x.insert(ps.x.end(), pt.begin(), pt.end());
        }
    }
    ps.lambda = ps.achieved_horizon = std::min(t, opts.lambda_max);
    return ps;
}

inline double min_pairwise_distance(const point_set& ps) {
    const std::size_t n = ps.size();
    if (n < 2) return std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            best = std::min(best, periodic_distance_sq(ps.point(i), ps.point(j), ps.L));
    return std::sqrt(best);
}

struct jamming_estimate {
    double intensity = 0.0;  // accepted points per unit volume at saturation
    double jhat = 0.0;       // dimensionless: intensity * rho^d
    double achieved_horizon = 0.0;
};

inline jamming_estimate estimate_jamming(int d, double rho, double L, std::uint64_t seed,
                                         const parking_options& opts = {}) {
    point_set ps = sample_random_parking(d, L, rho, seed, opts);
    jamming_estimate je;
    je.intensity = ps.intensity();
    je.jhat = je.intensity * std::pow(rho, d);
    je.achieved_horizon = ps.achieved_horizon;
    return je;
}

}  // namespace screed
