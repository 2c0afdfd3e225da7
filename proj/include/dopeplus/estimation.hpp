#pragma once

// Visit counters, empirical model, confidence radii, pessimism bonuses and
// the optimistic/pessimistic function estimators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "dopeplus/cmdp.hpp"
#include "dopeplus/environment.hpp"
#include "dopeplus/errors.hpp"

namespace dopeplus {

struct CountTag;
struct RadiusTag;

using VisitCounts = Tensor<3, CountTag, std::int64_t>;
using TransitionCounts = Tensor<4, CountTag, std::int64_t>;
/// Per-entry kernel radius indexed like a Kernel.
using KernelRadius = Tensor<4, RadiusTag>;

enum class Variant { dope_plus, dope };

inline const char* to_string(Variant v) { return v == Variant::dope_plus ? "dope+" : "dope"; }

/// ln(HSAK/δ), the log factor shared by every radius.
inline double log_term(const Dims& d, std::size_t episodes, double delta) {
    return std::log(static_cast<double>(d.horizon) * static_cast<double>(d.states) *
                    static_cast<double>(d.actions) * static_cast<double>(episodes) / delta);
}

/// Cap B = 1 + √L on any single noisy observation.
inline double observation_cap(double log_factor) { return 1.0 + std::sqrt(log_factor); }

class VisitCounters {
public:
    VisitCounters(const Dims& d, std::size_t episodes, double delta)
        : dims_(d),
          episodes_(episodes),
          delta_(delta),
          visits_({d.horizon, d.states, d.actions}, 0),
          transitions_({d.horizon == 0 ? 0 : d.horizon - 1, d.states, d.actions, d.states}, 0),
          reward_sum_(make_step_function(d)),
          cost_sum_(make_step_function(d)) {
        if (episodes == 0) throw ConfigError("episode count K must be at least 1");
        if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t episodes() const noexcept { return episodes_; }
    double delta() const noexcept { return delta_; }
    double log_factor() const { return log_term(dims_, episodes_, delta_); }
    /// Number of trajectories recorded so far (k - 1 during episode k).
    std::size_t recorded() const noexcept { return recorded_; }

    const VisitCounts& visits() const noexcept { return visits_; }
    const TransitionCounts& transitions() const noexcept { return transitions_; }
    const StepFunction& reward_sum() const noexcept { return reward_sum_; }
    const StepFunction& cost_sum() const noexcept { return cost_sum_; }

    void record(const Trajectory& traj) {
        for (const auto& st : traj.steps) {
            if (st.step >= dims_.horizon || st.state >= dims_.states || st.action >= dims_.actions)
                throw ShapeError("trajectory step outside the counter dimensions");
            visits_(st.step, st.state, st.action) += 1;
            reward_sum_(st.step, st.state, st.action) += st.observed_reward;
            cost_sum_(st.step, st.state, st.action) += st.observed_cost;
            if (st.step + 1 < dims_.horizon) {
                if (st.next_state >= dims_.states)
                    throw ShapeError("trajectory next state outside the counter dimensions");
                transitions_(st.step, st.state, st.action, st.next_state) += 1;
            }
        }
        ++recorded_;
    }

private:
    Dims dims_;
    std::size_t episodes_;
    double delta_;
    std::size_t recorded_ = 0;
    VisitCounts visits_;
    TransitionCounts transitions_;
    StepFunction reward_sum_;
    StepFunction cost_sum_;
};

inline void update_counters(VisitCounters& counters, const Trajectory& traj) {
    counters.record(traj);
}

namespace detail {
inline double floor_one(std::int64_t n) { return static_cast<double>(std::max<std::int64_t>(1, n)); }
inline double floor_one_minus_one(std::int64_t n) {
    return static_cast<double>(std::max<std::int64_t>(1, n - 1));
}
}  // namespace detail

struct EmpiricalModel {
    Kernel kernel;  // P̄_k; all-zero rows where N = 0
    StepFunction reward;
    StepFunction cost;
};

inline EmpiricalModel empirical_model(const VisitCounters& c) {
    const Dims& d = c.dims();
    EmpiricalModel m{make_kernel(d), make_step_function(d), make_step_function(d)};
    for (std::size_t h = 0; h < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s)
            for (std::size_t a = 0; a < d.actions; ++a) {
                const double n = detail::floor_one(c.visits()(h, s, a));
                m.reward(h, s, a) = c.reward_sum()(h, s, a) / n;
                m.cost(h, s, a) = c.cost_sum()(h, s, a) / n;
                if (h + 1 < d.horizon)
                    for (std::size_t sn = 0; sn < d.states; ++sn)
                        m.kernel(h, s, a, sn) =
                            static_cast<double>(c.transitions()(h, s, a, sn)) / n;
            }
    return m;
}

/// Empirical-Bernstein kernel radius
///   ε_k(s'|s,a,h) = 2√(P̄ L / max{1,N−1}) + 14 L / (3 max{1,N−1}).
inline KernelRadius epsilon_radius(const VisitCounters& c, const Kernel& empirical_kernel) {
    const Dims& d = c.dims();
    detail::require_kernel_shape(empirical_kernel, d, "empirical kernel");
    const double L = c.log_factor();
    KernelRadius eps(empirical_kernel.extents(), 0.0);
    for (std::size_t h = 0; h + 1 < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s)
            for (std::size_t a = 0; a < d.actions; ++a) {
                const double n = detail::floor_one_minus_one(c.visits()(h, s, a));
                for (std::size_t sn = 0; sn < d.states; ++sn)
                    eps(h, s, a, sn) = 2.0 * std::sqrt(empirical_kernel(h, s, a, sn) * L / n) +
                                       14.0 * L / (3.0 * n);
            }
    return eps;
}

/// Aggregated radius ε̄_k(s,a,h) = 2√(S L / max{1,N−1}) + 14 S L / (3 max{1,N−1}),
/// which dominates Σ_{s'} ε_k(s'|s,a,h).
inline StepFunction epsilon_agg(const VisitCounters& c) {
    const Dims& d = c.dims();
    const double L = c.log_factor();
    const double S = static_cast<double>(d.states);
    StepFunction out = make_step_function(d);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double n = detail::floor_one_minus_one(c.visits().flat()[i]);
        out.flat()[i] = 2.0 * std::sqrt(S * L / n) + 14.0 * S * L / (3.0 * n);
    }
    return out;
}

/// Hoeffding radius R_k = √(L / max{1,N}) for rewards and costs.
inline StepFunction reward_cost_radius(const VisitCounters& c) {
    const double L = c.log_factor();
    StepFunction out = make_step_function(c.dims());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.flat()[i] = std::sqrt(L / detail::floor_one(c.visits().flat()[i]));
    return out;
}

/// η = (19HS + 2H^{1.5}S + 10⁴H²S²) L².
inline double eta_constant(const Dims& d, double log_factor) {
    const double H = static_cast<double>(d.horizon);
    const double S = static_cast<double>(d.states);
    return (19.0 * H * S + 2.0 * std::pow(H, 1.5) * S + 1e4 * H * H * S * S) * log_factor *
           log_factor;
}

/// Tighter pessimism bonus
///   U = c·[8√H ε̄ + 4S√(HA/K) + (2√(HK/A) L + η) / max{1,N−1}].
inline StepFunction pessimism_bonus_dopeplus(const VisitCounters& c, const StepFunction& eps_agg,
                                             double scale = 1.0) {
    const Dims& d = c.dims();
    detail::require_step_shape(eps_agg, d, "aggregated radius");
    const double H = static_cast<double>(d.horizon);
    const double S = static_cast<double>(d.states);
    const double A = static_cast<double>(d.actions);
    const double K = static_cast<double>(c.episodes());
    const double L = c.log_factor();
    const double eta = eta_constant(d, L);
    const double flat_term = 4.0 * S * std::sqrt(H * A / K);
    const double numerator = 2.0 * std::sqrt(H * K / A) * L + eta;

    StepFunction out = make_step_function(d);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double n = detail::floor_one_minus_one(c.visits().flat()[i]);
        out.flat()[i] =
            scale * (8.0 * std::sqrt(H) * eps_agg.flat()[i] + flat_term + numerator / n);
    }
    return out;
}

/// DOPE bonus U = c·2H ε̄ (the nonincreasing form).
inline StepFunction pessimism_bonus_dope(const StepFunction& eps_agg, std::size_t horizon,
                                         double scale = 1.0) {
    const double factor = scale * 2.0 * static_cast<double>(horizon);
    return eps_agg.map([factor](double e) { return factor * e; });
}

struct EstimatorBundle {
    StepFunction reward;  // f̂_k
    StepFunction cost;    // ĝ_k
};

/// ĝ = ḡ + R + U and f̂ = min{B, f̄ + 3H/(C̄−C̄_b)·R + H/(C̄−C̄_b)·U}.
inline EstimatorBundle build_estimators(const EmpiricalModel& model, const StepFunction& radius,
                                        const StepFunction& bonus, double budget,
                                        double baseline_cost, double cap) {
    const Dims d = dims_of(model.reward);
    detail::require_step_shape(model.cost, d, "empirical cost");
    detail::require_step_shape(radius, d, "radius");
    detail::require_step_shape(bonus, d, "bonus");
    if (!(budget > baseline_cost))
        throw ConfigError("budget must exceed the baseline cost");

    const double H = static_cast<double>(d.horizon);
    const double slack = budget - baseline_cost;
    EstimatorBundle out{make_step_function(d), make_step_function(d)};
    for (std::size_t i = 0; i < out.cost.size(); ++i) {
        const double r = radius.flat()[i];
        const double u = bonus.flat()[i];
        out.cost.flat()[i] = model.cost.flat()[i] + r + u;
        out.reward.flat()[i] =
            std::min(cap, model.reward.flat()[i] + 3.0 * H / slack * r + H / slack * u);
    }
    return out;
}

/// Test utility: ε*_k = 6√(P_ref L / max{1,N}) + 94 L / max{1,N}, which
/// bounds |P̂ − P| for any two kernels inside the confidence set.
inline KernelRadius epsilon_star(const VisitCounters& c, const Kernel& reference) {
    const Dims& d = c.dims();
    detail::require_kernel_shape(reference, d, "reference kernel");
    const double L = c.log_factor();
    KernelRadius out(reference.extents(), 0.0);
    for (std::size_t h = 0; h + 1 < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s)
            for (std::size_t a = 0; a < d.actions; ++a) {
                const double n = detail::floor_one(c.visits()(h, s, a));
                for (std::size_t sn = 0; sn < d.states; ++sn)
                    out(h, s, a, sn) =
                        6.0 * std::sqrt(reference(h, s, a, sn) * L / n) + 94.0 * L / n;
            }
    return out;
}

struct BonusOptions {
    double scale = 1.0;
    /// Also multiply R_k by `scale` inside the estimators.
    bool scale_radius = false;
};

/// Everything derived from the counters for one episode.
struct BonusTables {
    EmpiricalModel model;
    KernelRadius eps;
    StepFunction eps_agg;
    StepFunction radius;
    StepFunction bonus;
    double eta = 0.0;
    double cap = 0.0;
    double scale = 1.0;
};

inline BonusTables compute_bonus_tables(const VisitCounters& c, Variant variant,
                                        const BonusOptions& opts = {}) {
    BonusTables t;
    t.model = empirical_model(c);
    t.eps = epsilon_radius(c, t.model.kernel);
    t.eps_agg = epsilon_agg(c);
    t.radius = reward_cost_radius(c);
    t.bonus = variant == Variant::dope_plus
                  ? pessimism_bonus_dopeplus(c, t.eps_agg, opts.scale)
                  : pessimism_bonus_dope(t.eps_agg, c.dims().horizon, opts.scale);
    t.eta = eta_constant(c.dims(), c.log_factor());
    t.cap = observation_cap(c.log_factor());
    t.scale = opts.scale;
    return t;
}

inline EstimatorBundle build_estimators(const BonusTables& t, double budget, double baseline_cost,
                                        const BonusOptions& opts = {}) {
    if (!opts.scale_radius)
        return build_estimators(t.model, t.radius, t.bonus, budget, baseline_cost, t.cap);
    const double s = opts.scale;
    return build_estimators(t.model, t.radius.map([s](double r) { return s * r; }), t.bonus,
                            budget, baseline_cost, t.cap);
}

}  // namespace dopeplus
