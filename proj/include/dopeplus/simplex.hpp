#pragma once

// Dense two-phase primal simplex with Bland's anti-cycling rule.
//
// Problems are stated as
//     maximize  cᵀx   subject to  rows (≤, =, ≥),  x ≥ 0.
// Rows that nonnegativity already implies (all coefficients ≤ 0 in a ≤ row
// with rhs ≥ 0, or the mirror case) are dropped before the tableau is built.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "dopeplus/errors.hpp"

namespace dopeplus {

enum class RowSense { less_equal, equal, greater_equal };

struct LpTerm {
    std::size_t column = 0;
    double coefficient = 0.0;
};

struct LpRow {
    std::vector<LpTerm> terms;
    RowSense sense = RowSense::less_equal;
    double rhs = 0.0;
    std::string name;
};

struct LpProblem {
    std::vector<double> objective;  // one coefficient per column, maximized
    std::vector<LpRow> rows;
    std::vector<std::string> column_names;  // optional, used by write_lp

    std::size_t columns() const noexcept { return objective.size(); }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
    }
    return "?";
}

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    std::vector<double> x;
    double objective = 0.0;
    std::size_t iterations = 0;
};

struct SimplexOptions {
    double pivot_tolerance = 1e-9;
    double feasibility_tolerance = 1e-7;
    double optimality_tolerance = 1e-9;
    std::size_t max_pivots = 1'000'000;
};

inline double row_activity(const LpRow& row, const std::vector<double>& x) {
    double v = 0.0;
    for (const auto& t : row.terms) v += t.coefficient * x[t.column];
    return v;
}

/// Largest amount by which `x` violates a row or a nonnegativity bound.
inline double max_violation(const LpProblem& p, const std::vector<double>& x) {
    double worst = 0.0;
    for (double v : x) worst = std::max(worst, -v);
    for (const auto& row : p.rows) {
        const double act = row_activity(row, x);
        switch (row.sense) {
            case RowSense::less_equal: worst = std::max(worst, act - row.rhs); break;
            case RowSense::greater_equal: worst = std::max(worst, row.rhs - act); break;
            case RowSense::equal: worst = std::max(worst, std::abs(act - row.rhs)); break;
        }
    }
    return worst;
}

namespace detail {

/// Tableau state shared by both phases.
class DenseTableau {
public:
    DenseTableau(const LpProblem& p, const SimplexOptions& opts) : opts_(opts) {
        structural_ = p.columns();
        for (const auto& row : p.rows)
            for (const auto& t : row.terms)
                if (t.column >= structural_)
                    throw ShapeError("LP row '" + row.name + "' references a missing column");

        // Presolve and normalize to rhs >= 0.
        struct Normalized {
            const LpRow* row;
            double sign;
            RowSense sense;
        };
        std::vector<Normalized> kept;
        for (const auto& row : p.rows) {
            bool any_pos = false, any_neg = false;
            for (const auto& t : row.terms) {
                if (!std::isfinite(t.coefficient))
                    throw ShapeError("LP row '" + row.name + "' has a non-finite coefficient");
                any_pos |= t.coefficient > 0.0;
                any_neg |= t.coefficient < 0.0;
            }
            if (!any_pos && !any_neg) {
                const bool ok = (row.sense == RowSense::less_equal && row.rhs >= 0.0) ||
                                (row.sense == RowSense::greater_equal && row.rhs <= 0.0) ||
                                (row.sense == RowSense::equal && row.rhs == 0.0);
                if (!ok) trivially_infeasible_ = true;
                continue;
            }
            if (row.sense == RowSense::less_equal && !any_pos && row.rhs >= 0.0) continue;
            if (row.sense == RowSense::greater_equal && !any_neg && row.rhs <= 0.0) continue;

            double sign = 1.0;
            RowSense sense = row.sense;
            if (row.rhs < 0.0 || (row.rhs == 0.0 && sense == RowSense::greater_equal)) {
                sign = -1.0;
                if (sense == RowSense::less_equal) sense = RowSense::greater_equal;
                else if (sense == RowSense::greater_equal) sense = RowSense::less_equal;
            }
            kept.push_back({&row, sign, sense});
        }

        rows_ = kept.size();
        std::size_t slacks = 0, artificials = 0;
        for (const auto& k : kept) {
            if (k.sense != RowSense::equal) ++slacks;
            if (k.sense != RowSense::less_equal) ++artificials;
        }
        first_artificial_ = structural_ + slacks;
        cols_ = first_artificial_ + artificials;
        width_ = cols_ + 1;
        t_.assign(rows_ * width_, 0.0);
        basis_.assign(rows_, 0);

        std::size_t next_slack = structural_, next_art = first_artificial_;
        for (std::size_t i = 0; i < rows_; ++i) {
            const auto& k = kept[i];
            double* r = row_ptr(i);
            for (const auto& t : k.row->terms) r[t.column] += k.sign * t.coefficient;
            r[cols_] = k.sign * k.row->rhs;
            if (k.sense == RowSense::less_equal) {
                r[next_slack] = 1.0;
                basis_[i] = next_slack++;
            } else {
                if (k.sense == RowSense::greater_equal) r[next_slack++] = -1.0;
                r[next_art] = 1.0;
                basis_[i] = next_art++;
            }
        }
        original_ = t_;
        original_width_ = width_;
        initial_basis_ = basis_;
    }

    bool trivially_infeasible() const noexcept { return trivially_infeasible_; }
    std::size_t pivots() const noexcept { return pivots_; }

    /// Phase 1: minimize the sum of artificials. Returns the final value.
    double phase_one() {
        if (first_artificial_ == cols_) return 0.0;
        raw_cost_.assign(width_, 0.0);
        for (std::size_t j = first_artificial_; j < cols_; ++j) raw_cost_[j] = 1.0;
        cost_ = raw_cost_;
        price_out();
        run(cols_);
        return -cost_[cols_];
    }

    /// Removes artificials from the basis (dropping redundant rows), then
    /// discards the artificial columns.
    void drop_artificials() {
        for (std::size_t i = 0; i < rows_;) {
            if (basis_[i] < first_artificial_) {
                ++i;
                continue;
            }
            const double* r = row_ptr(i);
            std::size_t entering = cols_;
            for (std::size_t j = 0; j < first_artificial_; ++j)
                if (std::abs(r[j]) > opts_.pivot_tolerance) {
                    entering = j;
                    break;
                }
            if (entering == cols_) {
                erase_row(i);
                continue;
            }
            pivot(i, entering);
            ++i;
        }
        // Compact away the artificial columns.
        const std::size_t new_width = first_artificial_ + 1;
        std::vector<double> compact(rows_ * new_width);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* src = row_ptr(i);
            double* dst = compact.data() + i * new_width;
            std::copy(src, src + first_artificial_, dst);
            dst[first_artificial_] = src[cols_];
        }
        t_ = std::move(compact);
        cols_ = first_artificial_;
        width_ = new_width;
    }

    /// Phase 2: minimize `costs`ᵀx over structural columns. Returns false
    /// when unbounded.
    bool phase_two(const std::vector<double>& costs) {
        raw_cost_.assign(width_, 0.0);
        for (std::size_t j = 0; j < structural_; ++j) raw_cost_[j] = costs[j];
        cost_ = raw_cost_;
        price_out();
        return run(cols_);
    }

    std::vector<double> primal() const {
        std::vector<double> x(structural_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i)
            if (basis_[i] < structural_) x[basis_[i]] = std::max(0.0, t_[i * width_ + cols_]);
        return x;
    }

private:
    double* row_ptr(std::size_t i) { return t_.data() + i * width_; }
    const double* row_ptr(std::size_t i) const { return t_.data() + i * width_; }

    /// Reduced costs d = c − c_Bᵀ B⁻¹A; the rhs slot holds −c_Bᵀ x_B.
    void price_out() {
        for (std::size_t i = 0; i < rows_; ++i) {
            const double cb = cost_[basis_[i]];
            if (cb == 0.0) continue;
            const double* r = row_ptr(i);
            for (std::size_t j = 0; j < width_; ++j) cost_[j] -= cb * r[j];
        }
    }

    /// Primal simplex on columns [0, limit). Returns false if unbounded.
    bool run(std::size_t limit) {
        for (;;) {
            std::size_t entering = limit;
            for (std::size_t j = 0; j < limit; ++j)
                if (cost_[j] < -opts_.optimality_tolerance) {
                    entering = j;
                    break;
                }
            if (entering == limit) return true;

            column_.resize(rows_);
            ratio_.resize(rows_);
            double best_ratio = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < rows_; ++i) {
                const double* r = row_ptr(i);
                const double a = column_[i] = r[entering];
                ratio_[i] = a > opts_.pivot_tolerance ? std::max(0.0, r[cols_]) / a
                                                      : std::numeric_limits<double>::infinity();
                best_ratio = std::min(best_ratio, ratio_[i]);
            }
            if (best_ratio == std::numeric_limits<double>::infinity()) return false;

            // Minimum ratio, then Bland's smallest basic index among the tied
            // rows whose pivot element is not tiny next to the largest tied one.
            const double tie = best_ratio + kRatioTie * (1.0 + best_ratio);
            double largest = 0.0;
            for (std::size_t i = 0; i < rows_; ++i)
                if (ratio_[i] <= tie) largest = std::max(largest, column_[i]);
            std::size_t leaving = rows_;
            for (std::size_t i = 0; i < rows_; ++i) {
                if (ratio_[i] > tie || column_[i] < kRelativePivot * largest) continue;
                if (leaving == rows_ || basis_[i] < basis_[leaving]) leaving = i;
            }
            // A small pivot on an aged tableau is often rounding noise:
            // refactor and choose again before trusting it.
            if (column_[leaving] < kSuspectPivot && since_reinvert_ > 0) {
                reinvert();
                continue;
            }
            pivot(leaving, entering, column_.data());
            if (++since_reinvert_ >= kReinvertEvery || (since_reinvert_ >= 10 && drifted_)) reinvert();
        }
    }

    /// Rebuilds the tableau for the current basis from the original rows by
    /// Gauss-Jordan elimination with partial pivoting, discarding the
    /// rounding error accumulated by earlier pivots. Keeps the old tableau
    /// if the basis is numerically singular.
    void reinvert() {
        since_reinvert_ = 0;
        std::vector<double> fresh = original_;
        std::vector<std::size_t> fresh_basis = initial_basis_;
        const std::size_t w = original_width_;
        std::vector<char> wanted(w, 0);
        for (std::size_t b : basis_) wanted[b] = 1;
        std::vector<char> row_done(rows_, 0);
        for (std::size_t i = 0; i < rows_; ++i) row_done[i] = wanted[fresh_basis[i]];
        for (std::size_t b : basis_) {
            if (std::find(fresh_basis.begin(), fresh_basis.end(), b) != fresh_basis.end()) continue;
            std::size_t best = rows_;
            double best_abs = kSingular;
            for (std::size_t i = 0; i < rows_; ++i) {
                if (row_done[i]) continue;
                const double a = std::abs(fresh[i * w + b]);
                if (a > best_abs) {
                    best_abs = a;
                    best = i;
                }
            }
            if (best == rows_) return;
            eliminate_column(fresh, w, best, b, nullptr, nullptr, false);
            fresh_basis[best] = b;
            row_done[best] = 1;
        }
        // Column layout may have been compacted since construction.
        std::vector<double> compact(rows_ * width_);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* src = fresh.data() + i * w;
            double* dst = compact.data() + i * width_;
            std::copy(src, src + cols_, dst);
            dst[cols_] = src[w - 1];
        }
        t_ = std::move(compact);
        basis_ = std::move(fresh_basis);
        cost_ = raw_cost_;
        price_out();
        snap_basic_values();
    }

    void pivot(std::size_t r, std::size_t c, const double* column = nullptr) {
        if (++pivots_ > opts_.max_pivots)
            throw SolverStalledError("simplex exceeded its pivot limit", pivots_);
        eliminate_column(t_, width_, r, c, cost_.data(), column, true);
        basis_[r] = c;
    }

    /// Basic values within the feasibility tolerance below zero are zero;
    /// left alone they turn into large errors at the next tiny pivot.
    void snap_basic_values() {
        drifted_ = false;
        for (std::size_t i = 0; i < rows_; ++i) {
            double& b = t_[i * width_ + cols_];
            if (b >= 0.0) continue;
            if (b >= -opts_.feasibility_tolerance) b = 0.0;
            else drifted_ = true;
        }
    }

    /// Scales row r so that entry c is 1 and clears column c from every
    /// other row of `t` (and from `extra` when given). Differences that
    /// cancel to within rounding of their inputs are flushed to zero, and
    /// with `snap`, basic values in the last slot are treated as in
    /// snap_basic_values. `column`, when given, holds column c of `t`.
    void eliminate_column(std::vector<double>& t, std::size_t width, std::size_t r, std::size_t c,
                          double* extra, const double* column, bool snap_values) {
        double* pr = t.data() + r * width;
        const double inv = 1.0 / pr[c];
        nonzero_.clear();
        for (std::size_t j = 0; j < width; ++j) {
            if (pr[j] == 0.0) continue;
            pr[j] *= inv;
            if (std::abs(pr[j]) < kDrop) pr[j] = 0.0;
            else nonzero_.push_back(j);
        }
        pr[c] = 1.0;
        auto snap = [&](double& b) {
            if (!snap_values || b >= 0.0) return;
            if (b >= -opts_.feasibility_tolerance) b = 0.0;
            else drifted_ = true;
        };
        snap(pr[width - 1]);
        auto eliminate = [&](double* row, double f) {
            if (f == 0.0) return;
            for (std::size_t j : nonzero_) {
                const double old = row[j];
                const double v = old - f * pr[j];
                row[j] = std::abs(v) <= std::max(kDrop, kCancel * std::abs(old)) ? 0.0 : v;
            }
            row[c] = 0.0;
        };
        for (std::size_t i = 0; i < rows_; ++i) {
            if (i == r) continue;
            double* row = t.data() + i * width;
            const double f = column ? column[i] : row[c];
            if (f == 0.0) continue;
            eliminate(row, f);
            snap(row[width - 1]);
        }
        if (extra) eliminate(extra, extra[c]);
    }

    void erase_row(std::size_t i) {
        t_.erase(t_.begin() + static_cast<std::ptrdiff_t>(i * width_),
                 t_.begin() + static_cast<std::ptrdiff_t>((i + 1) * width_));
        original_.erase(original_.begin() + static_cast<std::ptrdiff_t>(i * original_width_),
                        original_.begin() + static_cast<std::ptrdiff_t>((i + 1) * original_width_));
        basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(i));
        initial_basis_.erase(initial_basis_.begin() + static_cast<std::ptrdiff_t>(i));
        --rows_;
    }

    static constexpr double kDrop = 1e-14;
    static constexpr double kCancel = 1e-11;
    static constexpr double kSingular = 1e-11;
    static constexpr std::size_t kReinvertEvery = 500;
    static constexpr double kRatioTie = 1e-12;
    static constexpr double kRelativePivot = 1e-3;
    static constexpr double kSuspectPivot = 1e-6;

    SimplexOptions opts_;
    std::size_t structural_ = 0;
    std::size_t first_artificial_ = 0;
    std::size_t cols_ = 0;
    std::size_t width_ = 0;
    std::size_t rows_ = 0;
    std::size_t pivots_ = 0;
    bool trivially_infeasible_ = false;
    std::vector<double> t_;
    std::vector<double> cost_;
    std::vector<double> raw_cost_;
    std::vector<std::size_t> basis_;
    std::vector<double> original_;
    std::size_t original_width_ = 0;
    std::vector<std::size_t> initial_basis_;
    std::size_t since_reinvert_ = 0;
    std::vector<std::size_t> nonzero_;
    std::vector<double> column_;
    std::vector<double> ratio_;
    bool drifted_ = false;
};

}  // namespace detail

inline LpSolution solve_lp(const LpProblem& problem, const SimplexOptions& opts = {}) {
    detail::DenseTableau tab(problem, opts);
    LpSolution sol;
    if (tab.trivially_infeasible() || tab.phase_one() > opts.feasibility_tolerance) {
        sol.status = LpStatus::infeasible;
        sol.iterations = tab.pivots();
        return sol;
    }
    tab.drop_artificials();
    std::vector<double> costs(problem.columns());
    for (std::size_t j = 0; j < costs.size(); ++j) costs[j] = -problem.objective[j];
    const bool bounded = tab.phase_two(costs);
    sol.iterations = tab.pivots();
    sol.x = tab.primal();
    if (!bounded) {
        sol.status = LpStatus::unbounded;
        return sol;
    }
    sol.status = LpStatus::optimal;
    for (std::size_t j = 0; j < sol.x.size(); ++j) sol.objective += problem.objective[j] * sol.x[j];
    return sol;
}

/// Phase 1 only: true iff the feasible region is nonempty.
inline bool check_feasibility(const LpProblem& problem, const SimplexOptions& opts = {}) {
    detail::DenseTableau tab(problem, opts);
    return !tab.trivially_infeasible() && tab.phase_one() <= opts.feasibility_tolerance;
}

/// Writes the problem in CPLEX LP text format.
inline void write_lp(const LpProblem& p, std::ostream& os) {
    auto name = [&](std::size_t j) {
        return j < p.column_names.size() ? p.column_names[j] : "x" + std::to_string(j);
    };
    auto term = [&](double coef, std::size_t j, bool first) {
        if (coef < 0.0) os << (first ? "-" : " - ");
        else if (!first) os << " + ";
        os << std::abs(coef) << ' ' << name(j);
    };
    os.precision(17);
    os << "Maximize\n obj:";
    bool first = true;
    for (std::size_t j = 0; j < p.columns(); ++j) {
        if (p.objective[j] == 0.0) continue;
        os << ' ';
        term(p.objective[j], j, first);
        first = false;
    }
    if (first) os << " 0 " << name(0);
    os << "\nSubject To\n";
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
        const auto& row = p.rows[i];
        os << ' ' << (row.name.empty() ? "r" + std::to_string(i) : row.name) << ':';
        first = true;
        for (const auto& t : row.terms) {
            if (t.coefficient == 0.0) continue;
            os << ' ';
            term(t.coefficient, t.column, first);
            first = false;
        }
        if (first) os << " 0 " << name(0);
        switch (row.sense) {
            case RowSense::less_equal: os << " <= "; break;
            case RowSense::greater_equal: os << " >= "; break;
            case RowSense::equal: os << " = "; break;
        }
        os << row.rhs << '\n';
    }
    os << "End\n";
}

}  // namespace dopeplus
