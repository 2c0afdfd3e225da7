#pragma once

// Randomized sweeps of the occupancy-measure lemmas, shared by the unit
// tests and the acceptance binary. Each sweep reports its worst case.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>

#include "oracles.hpp"

namespace lemmas {

using namespace dopeplus;

struct Sweep {
    std::size_t cases = 0;
    double worst = 0.0;  // largest residual or bound ratio seen
};

inline Dims random_dims(Rng& rng, std::size_t max_s, std::size_t max_a, std::size_t max_h) {
    auto draw = [&](std::size_t hi) { return std::uniform_int_distribution<std::size_t>(1, hi)(rng); };
    const std::size_t h = draw(max_h), s = draw(max_s), a = draw(max_a);
    return Dims{h, s, a};
}

/// Largest |lhs − rhs| of the value-difference identity over random kernel pairs.
inline Sweep value_difference_sweep(std::uint64_t seed, std::size_t pairs = 100) {
    Rng rng(seed);
    Sweep out;
    for (; out.cases < pairs; ++out.cases) {
        const Dims d = random_dims(rng, 5, 4, 6);
        const auto r = value_difference(oracle::random_payoff(d, rng), oracle::random_policy(d, rng),
                                        oracle::random_kernel(d, rng), oracle::random_kernel(d, rng),
                                        oracle::random_simplex_point(d.states, rng));
        out.worst = std::max(out.worst, std::abs(r.lhs - r.rhs));
    }
    return out;
}

/// Largest Σ q·Var[V_{h+1}] / (2H²) over random (π, P', g) with g ∈ [0,1].
/// Half the draws use 0/1 payoffs, which push the variance up.
inline Sweep variance_bound_sweep(std::uint64_t seed, std::size_t triples = 100) {
    Rng rng(seed);
    Sweep out;
    for (; out.cases < triples; ++out.cases) {
        const Dims d = random_dims(rng, 5, 3, 8);
        auto g = oracle::random_payoff(d, rng);
        if (out.cases % 2) g = g.map([](double v) { return v < 0.5 ? 0.0 : 1.0; });
        const double H = static_cast<double>(d.horizon);
        const double total =
            transition_variance_total(oracle::random_policy(d, rng), g, oracle::random_kernel(d, rng),
                                      oracle::random_simplex_point(d.states, rng));
        out.worst = std::max(out.worst, total / (2.0 * H * H));
    }
    return out;
}

/// Largest E[⟨n,ℓ⟩²] / (2B⟨q, h⃗⊙ℓ⟩) with the left side from exhaustive
/// trajectory enumeration, over every shape S ≤ 3, A ≤ 2, H ≤ 3.
inline Sweep second_moment_sweep(std::uint64_t seed, std::size_t draws_per_shape = 10) {
    Rng rng(seed);
    std::uniform_real_distribution<double> bound(0.1, 5.0);
    Sweep out;
    for (std::size_t H = 1; H <= 3; ++H)
        for (std::size_t S = 1; S <= 3; ++S)
            for (std::size_t A = 1; A <= 2; ++A)
                for (std::size_t rep = 0; rep < draws_per_shape; ++rep, ++out.cases) {
                    const Dims d{H, S, A};
                    const double B = bound(rng);
                    const auto pi = oracle::random_policy(d, rng);
                    const auto kernel = oracle::random_kernel(d, rng);
                    const auto p0 = oracle::random_simplex_point(S, rng);
                    const auto ell = oracle::random_payoff(d, rng, B);
                    const double lhs = oracle::enumerated_second_moment(pi, ell, kernel, p0);
                    const double rhs =
                        2.0 * B *
                        horizon_weighted_total(oracle::enumerated_occupancy(pi, kernel, p0), ell);
                    if (rhs > 0.0) out.worst = std::max(out.worst, lhs / rhs);
                }
    return out;
}

}  // namespace lemmas
