#pragma once

// Ground-truth CMDP model: tables, exact value functions and the
// occupancy-measure calculus.
//
// Indices are 0-based throughout: steps h = 0..H-1, states s = 0..S-1,
// actions a = 0..A-1. The transition kernel is only stored for the H-1
// transitions that happen inside an episode; the initial distribution is
// kept separately and doubles as the "next-state" distribution of the last
// step wherever a full (h, s, a, s') table over all H steps is needed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dopeplus/errors.hpp"
#include "dopeplus/tensor.hpp"

namespace dopeplus {

struct Dims {
    std::size_t horizon = 0;
    std::size_t states = 0;
    std::size_t actions = 0;

    bool operator==(const Dims&) const = default;
};

struct StepTag;
struct KernelTag;
struct PolicyTag;
struct ValueTag;
struct OccupancyTag;
struct ExtendedOccupancyTag;

/// Payoff indexed (h, s, a): rewards, costs, radii, bonuses.
using StepFunction = Tensor<3, StepTag>;
/// Transition probabilities indexed (h, s, a, s') for h = 0..H-2.
using Kernel = Tensor<4, KernelTag>;
/// Action probabilities indexed (h, s, a).
using Policy = Tensor<3, PolicyTag>;
/// State values indexed (h, s) for h = 0..H; row H is identically zero.
using StateValues = Tensor<2, ValueTag>;
/// q(s, a, h) indexed (h, s, a).
using StateActionOccupancy = Tensor<3, OccupancyTag>;
/// Extended occupancy q̄(s, a, s', h) indexed (h, s, a, s') for all H steps.
using ExtendedOccupancy = Tensor<4, ExtendedOccupancyTag>;
using Distribution = std::vector<double>;

inline constexpr double kRowSumTolerance = 1e-12;

inline StepFunction make_step_function(const Dims& d, double fill = 0.0) {
    return StepFunction({d.horizon, d.states, d.actions}, fill);
}

inline Kernel make_kernel(const Dims& d, double fill = 0.0) {
    return Kernel({d.horizon == 0 ? 0 : d.horizon - 1, d.states, d.actions, d.states}, fill);
}

inline Policy make_policy(const Dims& d, double fill = 0.0) {
    return Policy({d.horizon, d.states, d.actions}, fill);
}

inline ExtendedOccupancy make_extended_occupancy(const Dims& d) {
    return ExtendedOccupancy({d.horizon, d.states, d.actions, d.states}, 0.0);
}

inline Policy uniform_policy(const Dims& d) {
    return make_policy(d, 1.0 / static_cast<double>(d.actions));
}

/// Policy that plays `action` everywhere.
inline Policy constant_policy(const Dims& d, std::size_t action) {
    Policy pi = make_policy(d);
    for (std::size_t h = 0; h < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s) pi(h, s, action) = 1.0;
    return pi;
}

template <class Tag>
Dims dims_of(const Tensor<3, Tag>& t) {
    return {t.extent(0), t.extent(1), t.extent(2)};
}

namespace detail {

inline std::string describe(const Dims& d) {
    std::ostringstream os;
    os << "(H=" << d.horizon << ", S=" << d.states << ", A=" << d.actions << ")";
    return os.str();
}

template <class Tag>
void require_step_shape(const Tensor<3, Tag>& t, const Dims& d, const char* what) {
    if (dims_of(t) != d)
        throw ShapeError(std::string(what) + " has extents " + describe(dims_of(t)) +
                         ", expected " + describe(d));
}

inline void require_kernel_shape(const Kernel& k, const Dims& d, const char* what = "kernel") {
    const std::size_t steps = d.horizon == 0 ? 0 : d.horizon - 1;
    if (k.extent(0) != steps || k.extent(1) != d.states || k.extent(2) != d.actions ||
        k.extent(3) != d.states)
        throw ShapeError(std::string(what) + " does not match " + describe(d));
}

inline void require_distribution_shape(const Distribution& p, const Dims& d) {
    if (p.size() != d.states) throw ShapeError("initial distribution does not match " + describe(d));
}

inline bool is_distribution(std::span<const double> row, double tol = kRowSumTolerance) {
    double sum = 0.0;
    for (double v : row) {
        if (!(v >= 0.0)) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

}  // namespace detail

/// Returns one message per kernel row that is not a probability vector.
inline std::vector<std::string> check_kernel(const Kernel& kernel,
                                             double tol = kRowSumTolerance) {
    std::vector<std::string> problems;
    for (std::size_t h = 0; h < kernel.extent(0); ++h)
        for (std::size_t s = 0; s < kernel.extent(1); ++s)
            for (std::size_t a = 0; a < kernel.extent(2); ++a)
                if (!detail::is_distribution(kernel.row(h, s, a), tol)) {
                    std::ostringstream os;
                    os << "P row (h=" << h + 1 << ", s=" << s << ", a=" << a
                       << ") is not a probability distribution";
                    problems.push_back(os.str());
                }
    return problems;
}

inline std::vector<std::string> check_policy(const Policy& policy,
                                             double tol = kRowSumTolerance) {
    std::vector<std::string> problems;
    for (std::size_t h = 0; h < policy.extent(0); ++h)
        for (std::size_t s = 0; s < policy.extent(1); ++s)
            if (!detail::is_distribution(policy.row(h, s), tol)) {
                std::ostringstream os;
                os << "policy row (h=" << h + 1 << ", s=" << s
                   << ") is not a probability distribution";
                problems.push_back(os.str());
            }
    return problems;
}

struct ValueTable {
    StateValues values;          // V_h(s), h = 0..H
    StepFunction action_values;  // Q_h(s, a)
};

/// Policy evaluation by backward induction.
inline ValueTable value_function(const Kernel& kernel, const StepFunction& payoff,
                                 const Policy& policy) {
    const Dims d = dims_of(payoff);
    detail::require_step_shape(policy, d, "policy");
    detail::require_kernel_shape(kernel, d);

    ValueTable out{StateValues({d.horizon + 1, d.states}, 0.0), make_step_function(d)};
    for (std::size_t step = d.horizon; step-- > 0;) {
        for (std::size_t s = 0; s < d.states; ++s) {
            double v = 0.0;
            for (std::size_t a = 0; a < d.actions; ++a) {
                double q = payoff(step, s, a);
                if (step + 1 < d.horizon) {
                    auto next = kernel.row(step, s, a);
                    for (std::size_t sn = 0; sn < d.states; ++sn)
                        q += next[sn] * out.values(step + 1, sn);
                }
                out.action_values(step, s, a) = q;
                v += policy(step, s, a) * q;
            }
            out.values(step, s) = v;
        }
    }
    return out;
}

/// V_1^π(ℓ, P) averaged over the initial distribution.
inline double expected_total(const Policy& policy, const StepFunction& payoff,
                             const Kernel& kernel, const Distribution& initial) {
    const Dims d = dims_of(payoff);
    detail::require_distribution_shape(initial, d);
    const ValueTable vt = value_function(kernel, payoff, policy);
    double total = 0.0;
    for (std::size_t s = 0; s < d.states; ++s) total += initial[s] * vt.values(0, s);
    return total;
}

/// Optimal (unconstrained) first-step value max_π V_1^π(ℓ, P).
inline double optimal_expected_total(const StepFunction& payoff, const Kernel& kernel,
                                     const Distribution& initial) {
    const Dims d = dims_of(payoff);
    detail::require_kernel_shape(kernel, d);
    detail::require_distribution_shape(initial, d);
    std::vector<double> next(d.states, 0.0), cur(d.states, 0.0);
    for (std::size_t step = d.horizon; step-- > 0;) {
        for (std::size_t s = 0; s < d.states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < d.actions; ++a) {
                double q = payoff(step, s, a);
                if (step + 1 < d.horizon) {
                    auto row = kernel.row(step, s, a);
                    for (std::size_t sn = 0; sn < d.states; ++sn) q += row[sn] * next[sn];
                }
                best = std::max(best, q);
            }
            cur[s] = best;
        }
        std::swap(cur, next);
    }
    double total = 0.0;
    for (std::size_t s = 0; s < d.states; ++s) total += initial[s] * next[s];
    return total;
}

struct OccupancyMeasure {
    StateActionOccupancy q;
    ExtendedOccupancy qbar;
};

/// Forward recursion for q^{P,π} and q̄^{P,π}. At the last step the next
/// state is distributed according to `initial`.
inline OccupancyMeasure occupancy_from_policy(const Policy& policy, const Kernel& kernel,
                                              const Distribution& initial) {
    const Dims d = dims_of(policy);
    detail::require_kernel_shape(kernel, d);
    detail::require_distribution_shape(initial, d);

    OccupancyMeasure occ{StateActionOccupancy({d.horizon, d.states, d.actions}, 0.0),
                         make_extended_occupancy(d)};
    std::vector<double> state_mass = initial;
    for (std::size_t h = 0; h < d.horizon; ++h) {
        std::vector<double> next_mass(d.states, 0.0);
        for (std::size_t s = 0; s < d.states; ++s) {
            for (std::size_t a = 0; a < d.actions; ++a) {
                const double q = state_mass[s] * policy(h, s, a);
                occ.q(h, s, a) = q;
                for (std::size_t sn = 0; sn < d.states; ++sn) {
                    const double p = h + 1 < d.horizon ? kernel(h, s, a, sn) : initial[sn];
                    occ.qbar(h, s, a, sn) = q * p;
                    next_mass[sn] += q * p;
                }
            }
        }
        state_mass = std::move(next_mass);
    }
    return occ;
}

/// (C3): q(s, a, h) = Σ_{s'} q̄(s, a, s', h).
inline StateActionOccupancy marginal(const ExtendedOccupancy& qbar) {
    StateActionOccupancy q({qbar.extent(0), qbar.extent(1), qbar.extent(2)}, 0.0);
    for (std::size_t h = 0; h < qbar.extent(0); ++h)
        for (std::size_t s = 0; s < qbar.extent(1); ++s)
            for (std::size_t a = 0; a < qbar.extent(2); ++a) {
                double m = 0.0;
                for (double v : qbar.row(h, s, a)) m += v;
                q(h, s, a) = m;
            }
    return q;
}

struct InducedModel {
    Policy policy;
    Kernel kernel;
};

/// Mass below which a state or state-action row counts as unreached.
inline constexpr double kZeroMass = 1e-12;

/// Policy and kernel induced by an extended occupancy table.
///
/// Entries in [-tolerance, 0) are treated as zero; anything more negative
/// throws InvalidOccupancyError. Unreached (s, h) get the uniform action
/// distribution and unreached (s, a, h) the uniform next-state distribution.
inline InducedModel policy_from_occupancy(const ExtendedOccupancy& qbar,
                                          double tolerance = 1e-9) {
    const Dims d{qbar.extent(0), qbar.extent(1), qbar.extent(2)};
    if (qbar.extent(3) != d.states) throw ShapeError("extended occupancy must be (H, S, A, S)");

    for (std::size_t i = 0; i < qbar.size(); ++i)
        if (!(qbar.flat()[i] >= -tolerance))
            throw InvalidOccupancyError("extended occupancy has an entry below -" +
                                        std::to_string(tolerance));

    auto clipped = [](double v) { return v > 0.0 ? v : 0.0; };
    InducedModel out{make_policy(d), make_kernel(d)};
    for (std::size_t h = 0; h < d.horizon; ++h) {
        for (std::size_t s = 0; s < d.states; ++s) {
            std::vector<double> action_mass(d.actions, 0.0);
            double state_mass = 0.0;
            for (std::size_t a = 0; a < d.actions; ++a) {
                for (double v : qbar.row(h, s, a)) action_mass[a] += clipped(v);
                state_mass += action_mass[a];
            }
            for (std::size_t a = 0; a < d.actions; ++a) {
                out.policy(h, s, a) = state_mass > kZeroMass
                                          ? action_mass[a] / state_mass
                                          : 1.0 / static_cast<double>(d.actions);
                if (h + 1 >= d.horizon) continue;
                auto src = qbar.row(h, s, a);
                auto dst = out.kernel.row(h, s, a);
                for (std::size_t sn = 0; sn < d.states; ++sn)
                    dst[sn] = action_mass[a] > kZeroMass
                                  ? clipped(src[sn]) / action_mass[a]
                                  : 1.0 / static_cast<double>(d.states);
            }
        }
    }
    return out;
}

enum class OccupancyCondition { normalization, flow, marginal, nonnegativity };

struct OccupancyViolation {
    OccupancyCondition condition;
    std::string detail;
};

inline const char* to_string(OccupancyCondition c) {
    switch (c) {
        case OccupancyCondition::normalization: return "C1";
        case OccupancyCondition::flow: return "C2";
        case OccupancyCondition::marginal: return "C3";
        case OccupancyCondition::nonnegativity: return "nonnegativity";
    }
    return "?";
}

/// Checks (C1) per-step normalization, (C2) flow conservation, (C3) the
/// marginal relation between q and q̄, and nonnegativity. Empty result
/// means the table is a valid occupancy measure.
inline std::vector<OccupancyViolation> validate_occupancy(const OccupancyMeasure& occ,
                                                          double tol = 1e-8,
                                                          double negative_tol = 1e-9) {
    const auto& qbar = occ.qbar;
    const std::size_t H = qbar.extent(0), S = qbar.extent(1), A = qbar.extent(2);
    std::vector<OccupancyViolation> out;
    auto report = [&](OccupancyCondition c, std::size_t h, std::size_t s, double gap) {
        std::ostringstream os;
        os << to_string(c) << " violated at h=" << h + 1;
        if (s != static_cast<std::size_t>(-1)) os << ", s=" << s;
        os << " (gap " << gap << ")";
        out.push_back({c, os.str()});
    };

    for (std::size_t h = 0; h < H; ++h) {
        double total = 0.0;
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a)
                for (double v : qbar.row(h, s, a)) total += v;
        if (std::abs(total - 1.0) > tol)
            report(OccupancyCondition::normalization, h, static_cast<std::size_t>(-1), total - 1.0);
    }

    for (std::size_t h = 1; h < H; ++h) {
        for (std::size_t s = 0; s < S; ++s) {
            double outflow = 0.0, inflow = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                for (double v : qbar.row(h, s, a)) outflow += v;
                for (std::size_t sp = 0; sp < S; ++sp) inflow += qbar(h - 1, sp, a, s);
            }
            if (std::abs(outflow - inflow) > tol)
                report(OccupancyCondition::flow, h, s, outflow - inflow);
        }
    }

    if (occ.q.extents() != std::array<std::size_t, 3>{H, S, A}) {
        out.push_back({OccupancyCondition::marginal, "C3 violated: q has wrong extents"});
    } else {
        const auto m = marginal(qbar);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double gap = occ.q.flat()[i] - m.flat()[i];
            if (std::abs(gap) > tol) {
                const std::size_t h = i / (S * A), s = (i / A) % S;
                report(OccupancyCondition::marginal, h, s, gap);
            }
        }
    }

    for (std::size_t i = 0; i < qbar.size(); ++i)
        if (qbar.flat()[i] < -negative_tol) {
            const std::size_t h = i / (S * A * S), s = (i / (A * S)) % S;
            report(OccupancyCondition::nonnegativity, h, s, qbar.flat()[i]);
        }
    for (std::size_t i = 0; i < occ.q.size(); ++i)
        if (occ.q.flat()[i] < -negative_tol) {
            const std::size_t h = i / (S * A), s = (i / A) % S;
            report(OccupancyCondition::nonnegativity, h, s, occ.q.flat()[i]);
        }
    return out;
}

/// Validates a bare q̄, deriving q through (C3).
inline std::vector<OccupancyViolation> validate_occupancy(const ExtendedOccupancy& qbar,
                                                          double tol = 1e-8,
                                                          double negative_tol = 1e-9) {
    return validate_occupancy(OccupancyMeasure{marginal(qbar), qbar}, tol, negative_tol);
}

struct ValueDifference {
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Both sides of the value-difference identity
///   ⟨ℓ, q^{P̂,π} − q^{P̃,π}⟩
///     = Σ q^{P̃,π}(s,a,h) (P̂ − P̃)(s'|s,a,h) V^π_{h+1}(s'; ℓ, P̂).
/// The two sides are computed along independent routes.
inline ValueDifference value_difference(const StepFunction& payoff, const Policy& policy,
                                        const Kernel& kernel_tilde, const Kernel& kernel_hat,
                                        const Distribution& initial) {
    const Dims d = dims_of(payoff);
    detail::require_step_shape(policy, d, "policy");
    detail::require_kernel_shape(kernel_tilde, d, "first kernel");
    detail::require_kernel_shape(kernel_hat, d, "second kernel");

    const auto occ_tilde = occupancy_from_policy(policy, kernel_tilde, initial);
    const auto occ_hat = occupancy_from_policy(policy, kernel_hat, initial);

    ValueDifference out;
    out.lhs = inner_product(payoff, occ_hat.q) - inner_product(payoff, occ_tilde.q);

    const ValueTable vt_hat = value_function(kernel_hat, payoff, policy);
    for (std::size_t h = 0; h + 1 < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s)
            for (std::size_t a = 0; a < d.actions; ++a) {
                double inner = 0.0;
                for (std::size_t sn = 0; sn < d.states; ++sn)
                    inner += (kernel_hat(h, s, a, sn) - kernel_tilde(h, s, a, sn)) *
                             vt_hat.values(h + 1, sn);
                out.rhs += occ_tilde.q(h, s, a) * inner;
            }
    return out;
}

/// Σ_{s,a,h} q(s,a,h) · Var_{s'∼P(·|s,a,h)}[V^π_{h+1}(s'; ℓ, P)], the summed
/// one-step variances of the next-step value. Bounded by 2H² when ℓ ∈ [0,1].
inline double transition_variance_total(const Policy& policy, const StepFunction& payoff,
                                        const Kernel& kernel, const Distribution& initial) {
    const Dims d = dims_of(payoff);
    const auto occ = occupancy_from_policy(policy, kernel, initial);
    const ValueTable vt = value_function(kernel, payoff, policy);
    double total = 0.0;
    for (std::size_t h = 0; h + 1 < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s)
            for (std::size_t a = 0; a < d.actions; ++a) {
                double mean = 0.0, square = 0.0;
                for (std::size_t sn = 0; sn < d.states; ++sn) {
                    const double v = vt.values(h + 1, sn);
                    mean += kernel(h, s, a, sn) * v;
                    square += kernel(h, s, a, sn) * v * v;
                }
                total += occ.q(h, s, a) * std::max(0.0, square - mean * mean);
            }
    return total;
}

/// ⟨q, h⃗ ⊙ ℓ⟩ with h⃗ = (1, 2, …, H) over steps.
inline double horizon_weighted_total(const StateActionOccupancy& q, const StepFunction& payoff) {
    const Dims d = dims_of(payoff);
    double total = 0.0;
    for (std::size_t h = 0; h < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s)
            for (std::size_t a = 0; a < d.actions; ++a)
                total += static_cast<double>(h + 1) * q(h, s, a) * payoff(h, s, a);
    return total;
}

/// Full ground-truth CMDP together with its strictly feasible baseline.
struct CmdpInstance {
    Dims dims;
    Kernel kernel;
    StepFunction reward;
    StepFunction cost;
    Distribution initial;
    double budget = 0.0;
    Policy baseline;
    double baseline_cost = 0.0;
    /// Serialization hint: the kernel is the same at every step.
    bool stationary = false;
};

/// Lists every broken invariant; empty means valid. The baseline cost is
/// checked against its exact recomputation when `baseline_tolerance` > 0.
inline std::vector<std::string> check_instance(const CmdpInstance& inst,
                                               double baseline_tolerance = 1e-6) {
    std::vector<std::string> problems;
    const Dims& d = inst.dims;
    if (d.horizon == 0 || d.states == 0 || d.actions == 0) {
        problems.emplace_back("H, states and actions must be positive");
        return problems;
    }
    try {
        detail::require_kernel_shape(inst.kernel, d);
        detail::require_step_shape(inst.reward, d, "f");
        detail::require_step_shape(inst.cost, d, "g");
        detail::require_step_shape(inst.baseline, d, "baseline policy");
        detail::require_distribution_shape(inst.initial, d);
    } catch (const ShapeError& e) {
        problems.emplace_back(e.what());
        return problems;
    }

    for (auto& p : check_kernel(inst.kernel)) problems.push_back(std::move(p));
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (const auto* table : {&inst.reward, &inst.cost}) {
        const char* name = table == &inst.reward ? "f" : "g";
        for (std::size_t h = 0; h < d.horizon; ++h)
            for (std::size_t s = 0; s < d.states; ++s)
                for (std::size_t a = 0; a < d.actions; ++a)
                    if (!in_unit((*table)(h, s, a))) {
                        std::ostringstream os;
                        os << name << "(h=" << h + 1 << ", s=" << s << ", a=" << a
                           << ") is outside [0,1]";
                        problems.push_back(os.str());
                    }
    }
    if (!detail::is_distribution(inst.initial, kRowSumTolerance))
        problems.emplace_back("p0 is not a probability distribution");
    const double H = static_cast<double>(d.horizon);
    if (!(inst.budget > 0.0 && inst.budget < H))
        problems.emplace_back("budget must lie in (0, H)");
    if (!(inst.baseline_cost < inst.budget))
        problems.emplace_back("baseline cost must be strictly below the budget");
    auto policy_problems = check_policy(inst.baseline);
    for (auto& p : policy_problems) problems.push_back("baseline: " + p);

    if (problems.empty() && baseline_tolerance > 0.0) {
        const double exact = expected_total(inst.baseline, inst.cost, inst.kernel, inst.initial);
        if (std::abs(exact - inst.baseline_cost) > baseline_tolerance) {
            std::ostringstream os;
            os.precision(17);
            os << "baseline cost " << inst.baseline_cost << " differs from its exact value "
               << exact;
            problems.push_back(os.str());
        }
    }
    return problems;
}

inline void validate_instance(const CmdpInstance& inst, double baseline_tolerance = 1e-6) {
    const auto problems = check_instance(inst, baseline_tolerance);
    if (problems.empty()) return;
    std::string msg = "invalid CMDP instance: " + problems.front();
    if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
    throw InstanceError(msg);
}

}  // namespace dopeplus
