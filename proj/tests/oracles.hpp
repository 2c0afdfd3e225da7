#pragma once

// Independent reference computations for the tests: random instances,
// exhaustive trajectory enumeration, LP vertex enumeration and a grid
// search. None of these reuse the library's recursions or solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "dopeplus/dopeplus.hpp"

namespace oracle {

using namespace dopeplus;

inline std::vector<double> random_simplex_point(std::size_t n, Rng& rng) {
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) total += (v = expo(rng));
    for (auto& v : p) v /= total;
    return p;
}

inline Kernel random_kernel(const Dims& d, Rng& rng) {
    Kernel k = make_kernel(d);
    for (std::size_t h = 0; h + 1 < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s)
            for (std::size_t a = 0; a < d.actions; ++a) {
                const auto p = random_simplex_point(d.states, rng);
                std::copy(p.begin(), p.end(), k.row(h, s, a).begin());
            }
    return k;
}

inline Policy random_policy(const Dims& d, Rng& rng) {
    Policy pi = make_policy(d);
    for (std::size_t h = 0; h < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s) {
            const auto p = random_simplex_point(d.actions, rng);
            std::copy(p.begin(), p.end(), pi.row(h, s).begin());
        }
    return pi;
}

inline Policy random_deterministic_policy(const Dims& d, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, d.actions - 1);
    Policy pi = make_policy(d);
    for (std::size_t h = 0; h < d.horizon; ++h)
        for (std::size_t s = 0; s < d.states; ++s) pi(h, s, pick(rng)) = 1.0;
    return pi;
}

inline StepFunction random_payoff(const Dims& d, Rng& rng, double hi = 1.0) {
    std::uniform_real_distribution<double> unit(0.0, hi);
    StepFunction f = make_step_function(d);
    for (auto& v : f.flat()) v = unit(rng);
    return f;
}

/// Random valid instance; the baseline is a random policy and the budget
/// sits halfway between its cost and H.
inline CmdpInstance random_instance(const Dims& d, Rng& rng) {
    CmdpInstance inst;
    inst.dims = d;
    inst.kernel = random_kernel(d, rng);
    inst.reward = random_payoff(d, rng);
    inst.cost = random_payoff(d, rng);
    inst.initial = random_simplex_point(d.states, rng);
    inst.baseline = random_policy(d, rng);
    inst.baseline_cost = expected_total(inst.baseline, inst.cost, inst.kernel, inst.initial);
    inst.budget = 0.5 * (inst.baseline_cost + static_cast<double>(d.horizon));
    return inst;
}

struct Path {
    double probability = 0.0;
    std::vector<std::size_t> states;   // s_1..s_H
    std::vector<std::size_t> actions;  // a_1..a_H
};

/// Calls `visit` for every (s_1, a_1, ..., s_H, a_H) of positive probability.
inline void enumerate_paths(const Policy& pi, const Kernel& kernel, const Distribution& initial,
                            const std::function<void(const Path&)>& visit) {
    const std::size_t H = pi.extent(0), S = pi.extent(1), A = pi.extent(2);
    Path path;
    path.states.resize(H);
    path.actions.resize(H);
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t h, std::size_t s,
                                                                    double prob) {
        path.states[h] = s;
        for (std::size_t a = 0; a < A; ++a) {
            const double pa = prob * pi(h, s, a);
            if (pa == 0.0) continue;
            path.actions[h] = a;
            if (h + 1 == H) {
                path.probability = pa;
                visit(path);
                continue;
            }
            for (std::size_t sn = 0; sn < S; ++sn) {
                const double p = pa * kernel(h, s, a, sn);
                if (p > 0.0) walk(h + 1, sn, p);
            }
        }
    };
    for (std::size_t s = 0; s < S; ++s)
        if (initial[s] > 0.0) walk(0, s, initial[s]);
}

inline double path_total(const Path& p, const StepFunction& payoff) {
    double total = 0.0;
    for (std::size_t h = 0; h < p.states.size(); ++h) total += payoff(h, p.states[h], p.actions[h]);
    return total;
}

/// E[Σ_h ℓ(s_h, a_h, h)] by enumeration.
inline double enumerated_value(const Policy& pi, const StepFunction& payoff, const Kernel& kernel,
                               const Distribution& initial) {
    double v = 0.0;
    enumerate_paths(pi, kernel, initial,
                    [&](const Path& p) { v += p.probability * path_total(p, payoff); });
    return v;
}

/// E[(Σ_h ℓ(s_h, a_h, h))²] by enumeration.
inline double enumerated_second_moment(const Policy& pi, const StepFunction& payoff,
                                       const Kernel& kernel, const Distribution& initial) {
    double m = 0.0;
    enumerate_paths(pi, kernel, initial, [&](const Path& p) {
        const double t = path_total(p, payoff);
        m += p.probability * t * t;
    });
    return m;
}

/// Visit probabilities q(s, a, h) by enumeration.
inline StateActionOccupancy enumerated_occupancy(const Policy& pi, const Kernel& kernel,
                                                 const Distribution& initial) {
    StateActionOccupancy q(pi.extents(), 0.0);
    enumerate_paths(pi, kernel, initial, [&](const Path& p) {
        for (std::size_t h = 0; h < p.states.size(); ++h)
            q(h, p.states[h], p.actions[h]) += p.probability;
    });
    return q;
}

/// Best value over all deterministic Markov policies, by brute force.
inline double best_deterministic_value(const StepFunction& payoff, const Kernel& kernel,
                                       const Distribution& initial) {
    const Dims d = dims_of(payoff);
    const std::size_t slots = d.horizon * d.states;
    std::vector<std::size_t> choice(slots, 0);
    double best = -std::numeric_limits<double>::infinity();
    while (true) {
        Policy pi = make_policy(d);
        for (std::size_t i = 0; i < slots; ++i) pi(i / d.states, i % d.states, choice[i]) = 1.0;
        best = std::max(best, enumerated_value(pi, payoff, kernel, initial));
        std::size_t i = 0;
        while (i < slots && ++choice[i] == d.actions) choice[i++] = 0;
        if (i == slots) break;
    }
    return best;
}

/// max cᵀx over {A x ≤ b, x ≥ 0} by enumerating every basic solution.
/// Returns nullopt when no vertex is feasible.
inline std::optional<double> vertex_enumeration(const std::vector<double>& c,
                                                const std::vector<std::vector<double>>& A,
                                                const std::vector<double>& b,
                                                double tol = 1e-9) {
    const std::size_t n = c.size(), m = A.size();
    // Constraint i < m is row i; i ≥ m is x_{i-m} ≥ 0 written as -x ≤ 0.
    auto coeff = [&](std::size_t i, std::size_t j) {
        return i < m ? A[i][j] : (j == i - m ? -1.0 : 0.0);
    };
    auto rhs = [&](std::size_t i) { return i < m ? b[i] : 0.0; };

    std::optional<double> best;
    std::vector<std::size_t> pick(n);
    for (std::size_t i = 0; i < n; ++i) pick[i] = i;
    const std::size_t total = m + n;
    while (true) {
        std::vector<std::vector<double>> M(n, std::vector<double>(n + 1));
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < n; ++j) M[r][j] = coeff(pick[r], j);
            M[r][n] = rhs(pick[r]);
        }
        bool singular = false;
        for (std::size_t col = 0; col < n && !singular; ++col) {
            std::size_t p = col;
            for (std::size_t r = col + 1; r < n; ++r)
                if (std::abs(M[r][col]) > std::abs(M[p][col])) p = r;
            if (std::abs(M[p][col]) < 1e-12) {
                singular = true;
                break;
            }
            std::swap(M[p], M[col]);
            for (std::size_t r = 0; r < n; ++r) {
                if (r == col) continue;
                const double f = M[r][col] / M[col][col];
                for (std::size_t j = col; j <= n; ++j) M[r][j] -= f * M[col][j];
            }
        }
        if (!singular) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j) x[j] = M[j][n] / M[j][j];
            bool feasible = true;
            for (std::size_t i = 0; i < total && feasible; ++i) {
                double lhs = 0.0;
                for (std::size_t j = 0; j < n; ++j) lhs += coeff(i, j) * x[j];
                feasible = lhs <= rhs(i) + tol;
            }
            if (feasible) {
                double v = 0.0;
                for (std::size_t j = 0; j < n; ++j) v += c[j] * x[j];
                if (!best || v > *best) best = v;
            }
        }
        // next n-subset of {0..total-1} in lexicographic order
        std::size_t i = n;
        while (i > 0 && pick[i - 1] == total - n + i - 1) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < n; ++j) pick[j] = pick[j - 1] + 1;
    }
    return best;
}

/// Best reward of the 1-state, 2-action, H = 1 problem with f = (0, 1),
/// g = (0, 1): grid search over the weight on the second action.
inline double toy_grid_search(double budget, double resolution = 1e-3) {
    double best = -std::numeric_limits<double>::infinity();
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
    for (std::size_t i = 0; i <= steps; ++i) {
        const double w = static_cast<double>(i) * resolution;
        if (w <= budget + 1e-12) best = std::max(best, w);
    }
    return best;
}

inline CmdpInstance toy_instance() {
    const Dims d{1, 1, 2};
    CmdpInstance inst;
    inst.dims = d;
    inst.kernel = make_kernel(d);
    inst.reward = make_step_function(d);
    inst.cost = make_step_function(d);
    inst.reward(0, 0, 1) = 1.0;
    inst.cost(0, 0, 1) = 1.0;
    inst.initial = {1.0};
    inst.budget = 0.5;
    inst.baseline = constant_policy(d, 0);
    inst.baseline_cost = 0.0;
    return inst;
}

}  // namespace oracle
