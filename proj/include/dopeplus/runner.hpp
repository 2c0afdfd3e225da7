#pragma once

// The learning loop: baseline phase, per-episode extended-LP planning,
// exact regret and hard-violation accounting, and paired variant runs.

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dopeplus/cmdp.hpp"
#include "dopeplus/environment.hpp"
#include "dopeplus/errors.hpp"
#include "dopeplus/estimation.hpp"
#include "dopeplus/extended_lp.hpp"
#include "dopeplus/simplex.hpp"

namespace dopeplus {

struct TrueOptimum {
    Policy policy;
    double value = 0.0;  // V_1^{π*}(f, P)
    double cost = 0.0;   // V_1^{π*}(g, P)
};

/// Optimal constrained policy for a known model: the extended LP with zero
/// radius around the true kernel.
inline TrueOptimum solve_constrained_optimum(const Kernel& kernel, const StepFunction& reward,
                                             const StepFunction& cost, const Distribution& initial,
                                             double budget, const SimplexOptions& opts = {}) {
    const Dims d = dims_of(reward);
    const KernelRadius zero(kernel.extents(), 0.0);
    const LpProblem lp = build_extended_lp(reward, cost, kernel, zero, initial, budget);
    const LpSolution sol = solve_lp(lp, opts);
    if (sol.status != LpStatus::optimal)
        throw InfeasibleInstanceError(std::string("constrained problem is ") + to_string(sol.status));
    InducedModel induced = extract_solution(sol.x, d, kernel, zero);
    TrueOptimum out;
    out.value = expected_total(induced.policy, reward, kernel, initial);
    out.cost = expected_total(induced.policy, cost, kernel, initial);
    out.policy = std::move(induced.policy);
    return out;
}

inline TrueOptimum solve_true_optimum(const CmdpInstance& inst, const SimplexOptions& opts = {}) {
    return solve_constrained_optimum(inst.kernel, inst.reward, inst.cost, inst.initial, inst.budget,
                                     opts);
}

/// When the learner stops playing the baseline.
enum class PhaseRule {
    lp_feasibility,   // first episode whose LP is feasible; infeasible later → baseline again
    fixed,            // after a user-supplied number of baseline episodes
    analytic_oracle,  // ⟨2R + U, q_b⟩ < C̄ − C̄_b with the true-kernel q_b (diagnostic)
};

struct AlgoConfig {
    Variant variant = Variant::dope_plus;
    std::size_t episodes = 1000;
    double delta = 0.01;
    BonusOptions bonus;
    PhaseRule phase_rule = PhaseRule::lp_feasibility;
    std::size_t baseline_episodes = 0;  // K₀ for PhaseRule::fixed
    /// Re-solve every episode; otherwise only after some N(s,a,h) doubles.
    bool lp_every_episode = true;
    std::uint64_t seed = 0;
    NoiseModel noise;
    SimplexOptions simplex;
    /// Test mode: estimators equal the true f, g and the LP uses the true
    /// kernel with zero radius.
    bool oracle_model = false;
    /// Writes one CPLEX LP file per solved episode when set.
    std::optional<std::filesystem::path> lp_dump_dir;
};

inline void validate_config(const AlgoConfig& c) {
    if (c.episodes < 1) throw ConfigError("K must be at least 1");
    if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(c.bonus.scale >= 0.0) || !std::isfinite(c.bonus.scale))
        throw ConfigError("bonus scale must be a finite nonnegative number");
}

enum class Phase { baseline, lp };

inline const char* to_string(Phase p) { return p == Phase::baseline ? "baseline" : "lp"; }

struct EpisodeRecord {
    std::size_t episode = 0;  // 1-based
    Phase phase = Phase::baseline;
    bool lp_feasible = false;
    bool lp_resolved = false;
    double expected_reward = 0.0;  // V_1^{π_k}(f, P)
    double expected_cost = 0.0;    // V_1^{π_k}(g, P)
    double realized_reward = 0.0;
    double realized_cost = 0.0;
    double cum_regret = 0.0;
    double cum_violation = 0.0;

    // Oracle diagnostics; none of these feed back into the learner.
    bool kernel_covered = true;     // |P − P̄_k| ≤ ε_k everywhere
    bool estimates_covered = true;  // |f̄_k − f|, |ḡ_k − g| ≤ R_k everywhere
    double lp_objective = 0.0;
    double lp_cost = 0.0;  // ⟨ĝ_k, q̂_k⟩
    std::optional<bool> pessimism_valid;
    std::size_t pivots = 0;
};

struct RunLog {
    Variant variant = Variant::dope_plus;
    std::uint64_t seed = 0;
    double optimal_value = 0.0;
    double budget = 0.0;
    std::vector<EpisodeRecord> episodes;

    /// 1-based index of the first LP-phase episode, 0 if none.
    std::size_t first_lp_episode() const {
        for (const auto& e : episodes)
            if (e.phase == Phase::lp) return e.episode;
        return 0;
    }
};

struct MetricSeries {
    std::vector<double> regret;
    std::vector<double> violation;
};

/// Cumulative regret Σ (V* − V^{π_j}(f,P)) and hard violation
/// Σ max{0, V^{π_j}(g,P) − C̄} from exact per-episode values.
inline MetricSeries compute_metrics(const RunLog& log, double optimal_value, double budget) {
    MetricSeries m;
    m.regret.reserve(log.episodes.size());
    m.violation.reserve(log.episodes.size());
    double regret = 0.0, violation = 0.0;
    for (const auto& e : log.episodes) {
        regret += optimal_value - e.expected_reward;
        violation += std::max(0.0, e.expected_cost - budget);
        m.regret.push_back(regret);
        m.violation.push_back(violation);
    }
    return m;
}

inline MetricSeries compute_metrics(const RunLog& log, const CmdpInstance& inst,
                                    const TrueOptimum& opt) {
    return compute_metrics(log, opt.value, inst.budget);
}

namespace detail {

inline bool kernel_inside_band(const Kernel& truth, const Kernel& centre, const KernelRadius& eps) {
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (std::abs(truth.flat()[i] - centre.flat()[i]) > eps.flat()[i]) return false;
    return true;
}

inline bool estimates_inside_radius(const CmdpInstance& inst, const EmpiricalModel& m,
                                    const StepFunction& radius) {
    for (std::size_t i = 0; i < radius.size(); ++i) {
        if (std::abs(m.reward.flat()[i] - inst.reward.flat()[i]) > radius.flat()[i]) return false;
        if (std::abs(m.cost.flat()[i] - inst.cost.flat()[i]) > radius.flat()[i]) return false;
    }
    return true;
}

inline bool any_count_doubled(const VisitCounts& now, const VisitCounts& then) {
    for (std::size_t i = 0; i < now.size(); ++i)
        if (now.flat()[i] >= 2 * std::max<std::int64_t>(1, then.flat()[i])) return true;
    return false;
}

}  // namespace detail

/// Runs K episodes of the learner on `inst`. The true optimum is only used
/// for the logged regret; pass it in to avoid recomputing it per run.
inline RunLog run(const CmdpInstance& inst, const AlgoConfig& cfg,
                  const std::optional<TrueOptimum>& known_optimum = std::nullopt) {
    validate_instance(inst);
    validate_config(cfg);
    const Dims& d = inst.dims;
    const TrueOptimum optimum = known_optimum ? *known_optimum : solve_true_optimum(inst, cfg.simplex);

    RunLog log;
    log.variant = cfg.variant;
    log.seed = cfg.seed;
    log.optimal_value = optimum.value;
    log.budget = inst.budget;
    log.episodes.reserve(cfg.episodes);

    Rng rng(cfg.seed);
    VisitCounters counters(d, cfg.episodes, cfg.delta);
    const StateActionOccupancy baseline_q =
        occupancy_from_policy(inst.baseline, inst.kernel, inst.initial).q;

    std::optional<InducedModel> cached;  // last LP plan, for the doubling schedule
    VisitCounts counts_at_solve = counters.visits();
    bool cached_feasible = false;
    bool switched = false;

    if (cfg.lp_dump_dir) std::filesystem::create_directories(*cfg.lp_dump_dir);

    for (std::size_t k = 1; k <= cfg.episodes; ++k) {
        EpisodeRecord rec;
        rec.episode = k;

        BonusTables tables = compute_bonus_tables(counters, cfg.variant, cfg.bonus);
        rec.kernel_covered = detail::kernel_inside_band(inst.kernel, tables.model.kernel, tables.eps);
        rec.estimates_covered = detail::estimates_inside_radius(inst, tables.model, tables.radius);

        bool try_lp = false;
        switch (cfg.phase_rule) {
            case PhaseRule::lp_feasibility: try_lp = true; break;
            case PhaseRule::fixed: try_lp = k > cfg.baseline_episodes; break;
            case PhaseRule::analytic_oracle:
                if (!switched) {
                    double lhs = 0.0;
                    for (std::size_t i = 0; i < baseline_q.size(); ++i)
                        lhs += baseline_q.flat()[i] *
                               (2.0 * tables.radius.flat()[i] + tables.bonus.flat()[i]);
                    switched = lhs < inst.budget - inst.baseline_cost;
                }
                try_lp = switched;
                break;
        }

        const Policy* play = &inst.baseline;
        if (try_lp) {
            const bool resolve = cfg.lp_every_episode || !cached_feasible ||
                                 detail::any_count_doubled(counters.visits(), counts_at_solve);
            if (resolve) {
                EstimatorBundle est;
                Kernel centre = tables.model.kernel;
                KernelRadius width = tables.eps;
                if (cfg.oracle_model) {
                    est = {inst.reward, inst.cost};
                    centre = inst.kernel;
                    width.fill(0.0);
                } else {
                    est = build_estimators(tables, inst.budget, inst.baseline_cost, cfg.bonus);
                }
                const LpProblem lp =
                    build_extended_lp(est.reward, est.cost, centre, width, inst.initial, inst.budget);
                if (cfg.lp_dump_dir) {
                    std::ofstream out(*cfg.lp_dump_dir / ("episode_" + std::to_string(k) + ".lp"));
                    write_lp(lp, out);
                }
                LpSolution sol = solve_lp(lp, cfg.simplex);
                rec.lp_resolved = true;
                rec.pivots = sol.iterations;
                cached_feasible = sol.status == LpStatus::optimal;
                counts_at_solve = counters.visits();
                if (cached_feasible) {
                    const ExtendedOccupancy qbar = to_extended_occupancy(sol.x, d);
                    cached = extract_solution(qbar, centre, width);
                    rec.lp_objective = sol.objective;
                    rec.lp_cost = inner_product(est.cost, marginal(qbar));
                    const double true_gap = std::abs(
                        expected_total(cached->policy, inst.cost, inst.kernel, inst.initial) -
                        expected_total(cached->policy, inst.cost, cached->kernel, inst.initial));
                    rec.pessimism_valid =
                        true_gap <=
                        expected_total(cached->policy, tables.bonus, cached->kernel, inst.initial);
                } else {
                    cached.reset();
                }
            }
            rec.lp_feasible = cached_feasible;
            if (cached_feasible) {
                play = &cached->policy;
                rec.phase = Phase::lp;
            }
        }

        rec.expected_reward = expected_total(*play, inst.reward, inst.kernel, inst.initial);
        rec.expected_cost = expected_total(*play, inst.cost, inst.kernel, inst.initial);

        const Trajectory traj = sample_episode(inst, *play, cfg.noise, rng);
        for (const auto& st : traj.steps) {
            rec.realized_reward += st.observed_reward;
            rec.realized_cost += st.observed_cost;
        }
        update_counters(counters, traj);
        log.episodes.push_back(std::move(rec));
    }

    const MetricSeries m = compute_metrics(log, optimum.value, inst.budget);
    for (std::size_t i = 0; i < log.episodes.size(); ++i) {
        log.episodes[i].cum_regret = m.regret[i];
        log.episodes[i].cum_violation = m.violation[i];
    }
    return log;
}

/// Largest bonus scale c ≤ 1 whose LP is feasible at episode
/// ⌊onset_fraction·K⌋ of a baseline-only prefix, minimized over `seeds`.
/// The prefix replays exactly the random stream `run` uses before its first
/// LP episode, so each seed's run switches phase no later than that episode
/// whenever feasibility is monotone in k. The result is rounded down to two
/// significant digits.
struct ScaleCalibration {
    double scale = 1.0;
    std::size_t onset_episode = 1;
};

inline bool lp_feasible_with_scale(const CmdpInstance& inst, const VisitCounters& counters,
                                   Variant variant, BonusOptions opts, double scale,
                                   const SimplexOptions& simplex) {
    opts.scale = scale;
    const BonusTables tables = compute_bonus_tables(counters, variant, opts);
    const EstimatorBundle est = build_estimators(tables, inst.budget, inst.baseline_cost, opts);
    const LpProblem lp = build_extended_lp(est.reward, est.cost, tables.model.kernel, tables.eps,
                                           inst.initial, inst.budget);
    return check_feasibility(lp, simplex);
}

inline ScaleCalibration calibrate_bonus_scale(const CmdpInstance& inst, Variant variant,
                                              std::size_t episodes, double delta,
                                              const std::vector<std::uint64_t>& seeds,
                                              double onset_fraction = 0.05,
                                              BonusOptions opts = {}, const NoiseModel& noise = {},
                                              const SimplexOptions& simplex = {}) {
    validate_instance(inst);
    if (seeds.empty()) throw ConfigError("calibration needs at least one seed");
    if (!(onset_fraction > 0.0 && onset_fraction <= 1.0))
        throw ConfigError("onset fraction must lie in (0, 1]");
    ScaleCalibration out;
    out.onset_episode = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(onset_fraction * static_cast<double>(episodes))));

    double scale = 1.0;
    for (std::uint64_t seed : seeds) {
        Rng rng(seed);
        VisitCounters counters(inst.dims, episodes, delta);
        for (std::size_t k = 1; k < out.onset_episode; ++k)
            update_counters(counters, sample_episode(inst, inst.baseline, noise, rng));
        auto feasible = [&](double c) {
            return lp_feasible_with_scale(inst, counters, variant, opts, c, simplex);
        };
        if (feasible(scale)) continue;
        if (!feasible(0.0))
            throw NotFoundError("LP is infeasible at episode " + std::to_string(out.onset_episode) +
                                " even without bonus (seed " + std::to_string(seed) + ")");
        double lo = scale;  // bracket [lo, hi] in log10 with lo feasible
        while (!feasible(lo)) {
            lo /= 10.0;
            if (lo < 1e-30) throw NotFoundError("no positive bonus scale is feasible");
        }
        double log_lo = std::log10(lo), log_hi = std::log10(scale);
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (log_lo + log_hi);
            (feasible(std::pow(10.0, mid)) ? log_lo : log_hi) = mid;
        }
        scale = std::pow(10.0, log_lo);
    }
    if (scale < 1.0) {
        const double unit = std::pow(10.0, std::floor(std::log10(scale)) - 1.0);
        scale = std::floor(scale / unit) * unit;
    }
    out.scale = scale;
    return out;
}

/// Runs `jobs` on at most `workers` threads; job i writes only its own slot.
inline void run_parallel(std::size_t jobs, std::size_t workers,
                         const std::function<void(std::size_t)>& job) {
    workers = std::max<std::size_t>(1, std::min(workers, jobs));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs; ++i) job(i);
        return;
    }
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < jobs;) {
                try {
                    job(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::size_t default_workers() {
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Mean and normal-approximation 95% half-width (1.96·sd/√n) of a sample.
struct IntervalSummary {
    double mean = 0.0;
    double half_width = 0.0;
};

inline IntervalSummary summarize(const std::vector<double>& xs) {
    IntervalSummary out;
    if (xs.empty()) return out;
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    out.half_width = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
    return out;
}

struct VariantSummary {
    Variant variant = Variant::dope_plus;
    std::vector<RunLog> runs;  // one per seed, in seed order
    IntervalSummary final_regret;
    IntervalSummary final_violation;
};

struct VariantComparison {
    VariantSummary dope_plus;
    VariantSummary dope;
};

/// Runs both variants on identical seeds (and therefore identical random
/// streams until their policies diverge).
inline VariantComparison compare_variants(const CmdpInstance& inst, const AlgoConfig& base,
                                          const std::vector<std::uint64_t>& seeds,
                                          const BonusOptions& dope_plus_bonus,
                                          const BonusOptions& dope_bonus,
                                          std::size_t workers = default_workers()) {
    const TrueOptimum opt = solve_true_optimum(inst, base.simplex);
    VariantComparison cmp;
    cmp.dope_plus.variant = Variant::dope_plus;
    cmp.dope.variant = Variant::dope;
    cmp.dope_plus.runs.resize(seeds.size());
    cmp.dope.runs.resize(seeds.size());

    run_parallel(2 * seeds.size(), workers, [&](std::size_t job) {
        const bool plus = job % 2 == 0;
        const std::size_t i = job / 2;
        AlgoConfig cfg = base;
        cfg.variant = plus ? Variant::dope_plus : Variant::dope;
        cfg.bonus = plus ? dope_plus_bonus : dope_bonus;
        cfg.seed = seeds[i];
        (plus ? cmp.dope_plus : cmp.dope).runs[i] = run(inst, cfg, opt);
    });

    for (VariantSummary* v : {&cmp.dope_plus, &cmp.dope}) {
        std::vector<double> regret, violation;
        for (const auto& r : v->runs) {
            regret.push_back(r.episodes.empty() ? 0.0 : r.episodes.back().cum_regret);
            violation.push_back(r.episodes.empty() ? 0.0 : r.episodes.back().cum_violation);
        }
        v->final_regret = summarize(regret);
        v->final_violation = summarize(violation);
    }
    return cmp;
}

inline VariantComparison compare_variants(const CmdpInstance& inst, const AlgoConfig& base,
                                          const std::vector<std::uint64_t>& seeds) {
    return compare_variants(inst, base, seeds, base.bonus, base.bonus);
}

}  // namespace dopeplus
