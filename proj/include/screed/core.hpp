#pragma once

// Shared basics: error types, periodic box metric, small integer helpers.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace screed {

inline constexpr const char* version = "0.1.0";

// Bad parameters / bad configuration; the CLI maps this to a usage error
// before any output file is written.
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Predictable resource exhaustion (memory budget, candidate budget, DOF cap),
// raised before the offending allocation or loop starts whenever possible.
struct resource_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Iterative solver failed to reach its tolerance within the iteration budget.
struct solver_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::int64_t ipow(std::int64_t base, int exp) {
    std::int64_t r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

// Signed displacement a-b wrapped into (-L/2, L/2].
inline double periodic_delta(double a, double b, double L) {
    double d = a - b;
    d -= L * std::floor(d / L + 0.5);
    // floor rounding can land on -L/2 exactly; fold it to +L/2
    if (d <= -0.5 * L) d += L;
    return d;
}

inline double periodic_distance_sq(std::span<const double> a, std::span<const double> b, double L) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        double d = periodic_delta(a[j], b[j], L);
        s += d * d;
    }
    return s;
}

inline double periodic_distance(std::span<const double> a, std::span<const double> b, double L) {
    return std::sqrt(periodic_distance_sq(a, b, L));
}

}  // namespace screed
