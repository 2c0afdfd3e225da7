#pragma once

// The extended linear program over q̄(s, a, s', h): optimistic objective,
// pessimistic budget row, flow conservation, initial distribution, and the
// two band rows per entry that confine the induced kernel to the
// confidence box [P̄ − ε, P̄ + ε].
//
// The last step's next-state split is pinned to the initial distribution
// with zero radius; it affects neither objective nor budget.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dopeplus/cmdp.hpp"
#include "dopeplus/errors.hpp"
#include "dopeplus/estimation.hpp"
#include "dopeplus/simplex.hpp"

namespace dopeplus {

/// Column layout: h-major, then s, a, s'.
class ExtendedLpIndexer {
public:
    struct Entry {
        std::size_t step, state, action, next_state;
        bool operator==(const Entry&) const = default;
    };

    explicit ExtendedLpIndexer(const Dims& d) : d_(d) {}

    std::size_t columns() const noexcept { return d_.horizon * d_.states * d_.actions * d_.states; }

    std::size_t column(std::size_t h, std::size_t s, std::size_t a, std::size_t sn) const noexcept {
        return ((h * d_.states + s) * d_.actions + a) * d_.states + sn;
    }

    Entry entry(std::size_t col) const noexcept {
        Entry e{};
        e.next_state = col % d_.states;
        col /= d_.states;
        e.action = col % d_.actions;
        col /= d_.actions;
        e.state = col % d_.states;
        e.step = col / d_.states;
        return e;
    }

    std::string name(std::size_t col) const {
        const Entry e = entry(col);
        return "q_h" + std::to_string(e.step + 1) + "_s" + std::to_string(e.state) + "_a" +
               std::to_string(e.action) + "_n" + std::to_string(e.next_state);
    }

private:
    Dims d_;
};

/// Row counts of a freshly built extended LP, in row order.
struct ExtendedLpLayout {
    std::size_t budget = 1;
    std::size_t flow = 0;
    std::size_t initial = 0;
    std::size_t band_upper = 0;
    std::size_t band_lower = 0;
};

inline ExtendedLpLayout extended_lp_layout(const Dims& d) {
    const std::size_t n = ExtendedLpIndexer(d).columns();
    return {1, d.states * (d.horizon - 1), d.states, n, n};
}

inline LpProblem build_extended_lp(const StepFunction& reward, const StepFunction& cost,
                                   const Kernel& empirical_kernel, const KernelRadius& radius,
                                   const Distribution& initial, double budget) {
    const Dims d = dims_of(reward);
    detail::require_step_shape(cost, d, "cost estimator");
    detail::require_kernel_shape(empirical_kernel, d, "empirical kernel");
    if (radius.extents() != empirical_kernel.extents())
        throw ShapeError("kernel radius does not match the empirical kernel");
    detail::require_distribution_shape(initial, d);
    if (!std::isfinite(budget)) throw ConfigError("budget must be finite");

    const ExtendedLpIndexer idx(d);
    const std::size_t n = idx.columns();
    const std::size_t S = d.states;

    LpProblem lp;
    lp.objective.assign(n, 0.0);
    lp.column_names.reserve(n);
    for (std::size_t j = 0; j < n; ++j) lp.column_names.push_back(idx.name(j));

    LpRow budget_row{{}, RowSense::less_equal, budget, "budget"};
    budget_row.terms.reserve(n);
    for (std::size_t h = 0; h < d.horizon; ++h)
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < d.actions; ++a)
                for (std::size_t sn = 0; sn < S; ++sn) {
                    const std::size_t j = idx.column(h, s, a, sn);
                    lp.objective[j] = reward(h, s, a);
                    budget_row.terms.push_back({j, cost(h, s, a)});
                }
    lp.rows.push_back(std::move(budget_row));

    for (std::size_t h = 1; h < d.horizon; ++h)
        for (std::size_t s = 0; s < S; ++s) {
            LpRow row{{}, RowSense::equal, 0.0,
                      "flow_h" + std::to_string(h + 1) + "_s" + std::to_string(s)};
            for (std::size_t a = 0; a < d.actions; ++a) {
                for (std::size_t sn = 0; sn < S; ++sn) row.terms.push_back({idx.column(h, s, a, sn), 1.0});
                for (std::size_t sp = 0; sp < S; ++sp) row.terms.push_back({idx.column(h - 1, sp, a, s), -1.0});
            }
            lp.rows.push_back(std::move(row));
        }

    for (std::size_t s = 0; s < S; ++s) {
        LpRow row{{}, RowSense::equal, initial[s], "init_s" + std::to_string(s)};
        for (std::size_t a = 0; a < d.actions; ++a)
            for (std::size_t sn = 0; sn < S; ++sn) row.terms.push_back({idx.column(0, s, a, sn), 1.0});
        lp.rows.push_back(std::move(row));
    }

    auto band_row = [&](std::size_t h, std::size_t s, std::size_t a, std::size_t sn, double level,
                        RowSense sense, const char* tag) {
        LpRow row{{}, sense, 0.0, std::string(tag) + "_" + idx.name(idx.column(h, s, a, sn)).substr(2)};
        row.terms.reserve(S);
        for (std::size_t k = 0; k < S; ++k)
            row.terms.push_back({idx.column(h, s, a, k), (k == sn ? 1.0 : 0.0) - level});
        return row;
    };
    auto centre = [&](std::size_t h, std::size_t s, std::size_t a, std::size_t sn) {
        return h + 1 < d.horizon ? empirical_kernel(h, s, a, sn) : initial[sn];
    };
    auto width = [&](std::size_t h, std::size_t s, std::size_t a, std::size_t sn) {
        return h + 1 < d.horizon ? radius(h, s, a, sn) : 0.0;
    };
    for (int upper = 1; upper >= 0; --upper)
        for (std::size_t j = 0; j < n; ++j) {
            const auto e = idx.entry(j);
            const double c = centre(e.step, e.state, e.action, e.next_state);
            const double w = width(e.step, e.state, e.action, e.next_state);
            lp.rows.push_back(upper ? band_row(e.step, e.state, e.action, e.next_state, c + w,
                                               RowSense::less_equal, "band_up")
                                    : band_row(e.step, e.state, e.action, e.next_state, c - w,
                                               RowSense::greater_equal, "band_lo"));
        }
    return lp;
}

/// Reshapes an LP vertex into q̄, zeroing entries in [-tolerance, 0).
inline ExtendedOccupancy to_extended_occupancy(const std::vector<double>& x, const Dims& d,
                                               double tolerance = 1e-9) {
    ExtendedOccupancy qbar = make_extended_occupancy(d);
    if (x.size() != qbar.size()) throw ShapeError("LP solution has the wrong number of columns");
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (!(x[j] >= -tolerance))
            throw InvalidOccupancyError("LP solution entry " + std::to_string(j) +
                                        " is negative beyond tolerance");
        qbar.flat()[j] = std::max(0.0, x[j]);
    }
    return qbar;
}

/// Euclidean projection of `target` onto {lo ≤ p ≤ hi, Σp = 1}, assumed
/// nonempty. Solved by bisection on the shift τ in p = clamp(target − τ).
inline std::vector<double> project_onto_band(const std::vector<double>& target,
                                             const std::vector<double>& lo,
                                             const std::vector<double>& hi) {
    const std::size_t n = target.size();
    auto mass = [&](double tau) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += std::clamp(target[i] - tau, lo[i], hi[i]);
        return m;
    };
    double left = std::numeric_limits<double>::infinity();
    double right = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        left = std::min(left, target[i] - hi[i]);
        right = std::max(right, target[i] - lo[i]);
    }
    for (int it = 0; it < 200 && right - left > 1e-15; ++it) {
        const double mid = 0.5 * (left + right);
        (mass(mid) > 1.0 ? left : right) = mid;
    }
    std::vector<double> p(n);
    const double tau = 0.5 * (left + right);
    for (std::size_t i = 0; i < n; ++i) p[i] = std::clamp(target[i] - tau, lo[i], hi[i]);
    return p;
}

/// Policy and kernel induced by an optimal LP vertex. Unreached (s, a, h)
/// rows of the kernel get the projection of the uniform distribution onto
/// the confidence band; every returned kernel row sums to 1.
inline InducedModel extract_solution(const ExtendedOccupancy& qbar, const Kernel& empirical_kernel,
                                     const KernelRadius& radius) {
    InducedModel induced = policy_from_occupancy(qbar);
    const Dims d{qbar.extent(0), qbar.extent(1), qbar.extent(2)};
    detail::require_kernel_shape(empirical_kernel, d, "empirical kernel");
    const std::size_t S = d.states;
    const std::vector<double> uniform(S, 1.0 / static_cast<double>(S));

    for (std::size_t h = 0; h + 1 < d.horizon; ++h)
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < d.actions; ++a) {
                double mass = 0.0;
                for (double v : qbar.row(h, s, a)) mass += std::max(0.0, v);
                auto row = induced.kernel.row(h, s, a);
                if (mass <= kZeroMass) {
                    std::vector<double> lo(S), hi(S);
                    for (std::size_t sn = 0; sn < S; ++sn) {
                        lo[sn] = std::max(0.0, empirical_kernel(h, s, a, sn) - radius(h, s, a, sn));
                        hi[sn] = std::min(1.0, empirical_kernel(h, s, a, sn) + radius(h, s, a, sn));
                    }
                    const auto p = project_onto_band(uniform, lo, hi);
                    std::copy(p.begin(), p.end(), row.begin());
                }
                double total = 0.0;
                for (double v : row) total += v;
                for (auto& v : row) v /= total;
            }
    return induced;
}

inline InducedModel extract_solution(const std::vector<double>& x, const Dims& d,
                                     const Kernel& empirical_kernel, const KernelRadius& radius) {
    return extract_solution(to_extended_occupancy(x, d), empirical_kernel, radius);
}

}  // namespace dopeplus
