#pragma once

// Episode simulation, the three-state benchmark, and baseline discovery.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "dopeplus/cmdp.hpp"
#include "dopeplus/errors.hpp"

namespace dopeplus {

using Rng = std::mt19937_64;

/// Zero-mean observation noise. Gaussian with variance 1/2 satisfies
/// E[exp(λζ)] = exp(λ²/4) exactly.
struct NoiseModel {
    enum class Kind { gaussian, none };
    Kind kind = Kind::gaussian;
    double variance = 0.5;

    static NoiseModel disabled() { return {Kind::none, 0.0}; }
};

inline double noisy_observe(double mean, const NoiseModel& noise, Rng& rng) {
    if (noise.kind == NoiseModel::Kind::none) return mean;
    std::normal_distribution<double> zeta(0.0, std::sqrt(noise.variance));
    return mean + zeta(rng);
}

inline constexpr std::size_t kNoState = std::numeric_limits<std::size_t>::max();

struct TrajectoryStep {
    std::size_t step = 0;  // 0-based h
    std::size_t state = 0;
    std::size_t action = 0;
    double observed_reward = 0.0;
    double observed_cost = 0.0;
    std::size_t next_state = kNoState;  // kNoState on the last step

    bool operator==(const TrajectoryStep&) const = default;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;

    bool operator==(const Trajectory&) const = default;
};

/// Inverse-CDF draw from a probability row.
inline std::size_t sample_index(std::span<const double> probs, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        cum += probs[i];
        last_positive = i;
        if (u < cum) return i;
    }
    return last_positive;
}

/// Plays one episode of `policy` in `inst`. Draw order per step: action,
/// reward noise, cost noise, next state.
inline Trajectory sample_episode(const CmdpInstance& inst, const Policy& policy,
                                 const NoiseModel& noise, Rng& rng) {
    const Dims& d = inst.dims;
    detail::require_step_shape(policy, d, "policy");
    Trajectory traj;
    traj.steps.reserve(d.horizon);
    std::size_t s = sample_index(inst.initial, rng);
    for (std::size_t h = 0; h < d.horizon; ++h) {
        TrajectoryStep st;
        st.step = h;
        st.state = s;
        st.action = sample_index(policy.row(h, s), rng);
        st.observed_reward = noisy_observe(inst.reward(h, s, st.action), noise, rng);
        st.observed_cost = noisy_observe(inst.cost(h, s, st.action), noise, rng);
        if (h + 1 < d.horizon) {
            st.next_state = sample_index(inst.kernel.row(h, s, st.action), rng);
            s = st.next_state;
        }
        traj.steps.push_back(st);
    }
    return traj;
}

/// The three-state, two-action benchmark. Action 0 (a₁) stays with
/// probability 0.8 and advances along s₁→s₂→s₃→s₁ with 0.2; action 1 (a₂)
/// advances with 0.8 and stays with 0.2. a₁ is free and unrewarded; a₂
/// costs 1 and pays 1/3, 2/3, 1 in s₁, s₂, s₃. The baseline is "always a₁"
/// (cost 0) until replaced, e.g. by find_safe_baseline.
inline CmdpInstance build_benchmark_instance(std::size_t horizon = 30, double budget = 18.0) {
    if (horizon < 1) throw ConfigError("benchmark horizon must be at least 1");
    if (!(budget > 0.0 && budget < static_cast<double>(horizon)))
        throw ConfigError("benchmark budget must lie in (0, H)");

    const Dims d{horizon, 3, 2};
    CmdpInstance inst;
    inst.dims = d;
    inst.stationary = true;
    inst.kernel = make_kernel(d);
    inst.reward = make_step_function(d);
    inst.cost = make_step_function(d);
    inst.initial.assign(3, 1.0 / 3.0);
    inst.budget = budget;

    const double reward_a2[3] = {1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (std::size_t h = 0; h < horizon; ++h) {
        for (std::size_t s = 0; s < 3; ++s) {
            const std::size_t next = (s + 1) % 3;
            inst.reward(h, s, 1) = reward_a2[s];
            inst.cost(h, s, 1) = 1.0;
            if (h + 1 < horizon) {
                inst.kernel(h, s, 0, s) = 0.8;
                inst.kernel(h, s, 0, next) = 0.2;
                inst.kernel(h, s, 1, s) = 0.2;
                inst.kernel(h, s, 1, next) = 0.8;
            }
        }
    }
    inst.baseline = constant_policy(d, 0);
    inst.baseline_cost = 0.0;
    return inst;
}

/// Policy with Dirichlet(1) rows, i.e. uniform over each action simplex.
inline Policy sample_dirichlet_policy(const Dims& d, Rng& rng) {
    std::exponential_distribution<double> expo(1.0);
    Policy pi = make_policy(d);
    for (std::size_t h = 0; h < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s) {
            auto row = pi.row(h, s);
            double total = 0.0;
            for (auto& v : row) total += (v = expo(rng));
            for (auto& v : row) v /= total;
        }
    return pi;
}

struct SafeBaseline {
    Policy policy;
    double cost = 0.0;
};

/// Rejection-samples random policies until one has exact expected cost at
/// most `cost_cap`.
inline SafeBaseline find_safe_baseline(const CmdpInstance& inst, double cost_cap, Rng& rng,
                                       std::size_t max_tries = 10000) {
    if (!(cost_cap < inst.budget))
        throw ConfigError("baseline cost cap must be below the budget");
    for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
        Policy pi = sample_dirichlet_policy(inst.dims, rng);
        const double c = expected_total(pi, inst.cost, inst.kernel, inst.initial);
        if (c <= cost_cap) return {std::move(pi), c};
    }
    throw NotFoundError("no random policy with expected cost <= " + std::to_string(cost_cap) +
                        " after " + std::to_string(max_tries) + " tries");
}

/// Convenience: the benchmark with a sampled baseline installed.
inline CmdpInstance build_benchmark_with_baseline(std::size_t horizon, double budget,
                                                  double baseline_cap,
                                                  std::uint64_t baseline_seed) {
    CmdpInstance inst = build_benchmark_instance(horizon, budget);
    Rng rng(baseline_seed);
    SafeBaseline b = find_safe_baseline(inst, baseline_cap, rng);
    inst.baseline = std::move(b.policy);
    inst.baseline_cost = b.cost;
    return inst;
}

}  // namespace dopeplus
