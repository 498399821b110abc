#pragma once

// Counter-based random number generation.  Every stream is a pure function of
// (master_seed, indices...), so realizations are reproducible regardless of
// thread scheduling and seeds are decorrelated across experiment cells.
//
// Core primitive: the splitmix64 finalizer over a Weyl sequence.  Stream
// derivation chains the finalizer:
//   derive(s, i)       = mix(mix(s + GOLDEN) ^ (GOLDEN*(i+1)))
//   derive(s, i, j)    = derive(derive(s, i), j)

#include <cmath>
#include <cstdint>

namespace screed {

inline constexpr std::uint64_t rng_golden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(mix64(seed + rng_golden) ^ (rng_golden * (index + 1)));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t i, std::uint64_t j) {
    return derive_seed(derive_seed(seed, i), j);
}

// Weyl-sequence splitmix64 stream.
class rng {
  public:
    explicit rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += rng_golden;
        return mix64(state_);
    }

    // uniform in [0, 1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // exponential with the given rate (mean 1/rate)
    double exponential(double rate) {
        double u = uniform01();
        return -std::log1p(-u) / rate;
    }

  private:
    std::uint64_t state_;
};

}  // namespace screed
