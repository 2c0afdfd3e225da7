#include <gtest/gtest.h>

#include <cmath>

#include "dopeplus/dopeplus.hpp"
#include "oracles.hpp"

using namespace dopeplus;

namespace {

const Dims kFull{30, 3, 2};
constexpr std::size_t kFullEpisodes = 200000;

// A two-step trajectory through (s, a) at step 1 and then s'.
Trajectory two_step(std::size_t s, std::size_t a, std::size_t sn, double f = 0.0, double g = 0.0) {
    Trajectory t;
    t.steps.push_back({0, s, a, f, g, sn});
    t.steps.push_back({1, sn, 0, 0.0, 0.0, kNoState});
    return t;
}

VisitCounters visited(const Dims& d, std::size_t episodes, std::size_t times) {
    VisitCounters c(d, episodes, 0.01);
    Trajectory t;
    for (std::size_t h = 0; h < d.horizon; ++h)
        t.steps.push_back({h, 0, 0, 0.0, 0.0, h + 1 < d.horizon ? 0 : kNoState});
    for (std::size_t i = 0; i < times; ++i) c.record(t);
    return c;
}

}  // namespace

TEST(LogTerm, BenchmarkParameters) {
    const double L = log_term(kFull, kFullEpisodes, 0.01);
    EXPECT_NEAR(L, 22.004, 5e-4);
    EXPECT_NEAR(observation_cap(L), 5.691, 5e-4);
}

TEST(Counters, OneTrajectoryMarksVisitedTuples) {
    const Dims d{3, 2, 2};
    VisitCounters c(d, 10, 0.1);
    Trajectory t;
    t.steps = {{0, 1, 0, 0.5, 0.2, 0}, {1, 0, 1, 0.1, 0.9, 1}, {2, 1, 1, 1.0, 0.0, kNoState}};
    update_counters(c, t);
    std::int64_t total = 0;
    for (auto n : c.visits().flat()) total += n;
    EXPECT_EQ(total, 3);
    EXPECT_EQ(c.visits()(0, 1, 0), 1);
    EXPECT_EQ(c.visits()(1, 0, 1), 1);
    EXPECT_EQ(c.visits()(2, 1, 1), 1);
    EXPECT_EQ(c.transitions()(0, 1, 0, 0), 1);
    EXPECT_EQ(c.transitions()(1, 0, 1, 1), 1);
    EXPECT_EQ(c.reward_sum()(1, 0, 1), 0.1);
    EXPECT_EQ(c.cost_sum()(1, 0, 1), 0.9);
    EXPECT_EQ(c.recorded(), 1u);
    update_counters(c, t);
    EXPECT_EQ(c.visits()(1, 0, 1), 2);
}

TEST(Counters, RejectsOutOfRangeSteps) {
    VisitCounters c({2, 2, 2}, 10, 0.1);
    Trajectory t;
    t.steps = {{0, 2, 0, 0.0, 0.0, 0}};
    EXPECT_THROW(c.record(t), ShapeError);
    EXPECT_THROW(VisitCounters({2, 2, 2}, 0, 0.1), ConfigError);
    EXPECT_THROW(VisitCounters({2, 2, 2}, 5, 1.0), ConfigError);
}

TEST(Counters, CountingIdentities) {
    const auto inst = build_benchmark_with_baseline(6, 3.6, 3.0, 7);
    VisitCounters c(inst.dims, 500, 0.01);
    Rng rng(3);
    for (std::size_t k = 1; k <= 200; ++k) {
        const auto before = c.visits();
        update_counters(c, sample_episode(inst, inst.baseline, {}, rng));
        for (std::size_t i = 0; i < before.size(); ++i)
            EXPECT_GE(c.visits().flat()[i], before.flat()[i]);
        for (std::size_t h = 0; h < 6; ++h) {
            std::int64_t total = 0;
            for (std::size_t s = 0; s < 3; ++s)
                for (std::size_t a = 0; a < 2; ++a) {
                    total += c.visits()(h, s, a);
                    if (h + 1 < 6) {
                        std::int64_t m = 0;
                        for (std::size_t sn = 0; sn < 3; ++sn) m += c.transitions()(h, s, a, sn);
                        EXPECT_EQ(m, c.visits()(h, s, a));
                    }
                }
            EXPECT_EQ(total, static_cast<std::int64_t>(k));
        }
    }
}

TEST(EmpiricalModel, ZeroCountsGiveZeros) {
    VisitCounters c({4, 3, 2}, 10, 0.1);
    const auto m = empirical_model(c);
    for (double v : m.kernel.flat()) EXPECT_EQ(v, 0.0);
    for (double v : m.reward.flat()) EXPECT_EQ(v, 0.0);
    for (double v : m.cost.flat()) EXPECT_EQ(v, 0.0);
}

TEST(EmpiricalModel, DirectRatio) {
    VisitCounters c({2, 2, 1}, 10, 0.1);
    for (int i = 0; i < 3; ++i) c.record(two_step(0, 0, 1, 0.5, 1.0));
    c.record(two_step(0, 0, 0, 0.1, 0.0));
    const auto m = empirical_model(c);
    EXPECT_DOUBLE_EQ(m.kernel(0, 0, 0, 1), 0.75);
    EXPECT_DOUBLE_EQ(m.kernel(0, 0, 0, 0), 0.25);
    EXPECT_DOUBLE_EQ(m.reward(0, 0, 0), 1.6 / 4.0);
    EXPECT_DOUBLE_EQ(m.cost(0, 0, 0), 0.75);
}

TEST(EmpiricalModel, ConsistentOnLongUniformRun) {
    const auto inst = build_benchmark_instance(5, 3.0);
    VisitCounters c(inst.dims, 100000, 0.01);
    Rng rng(19);
    const auto pi = uniform_policy(inst.dims);
    for (int k = 0; k < 100000; ++k) c.record(sample_episode(inst, pi, {}, rng));
    const auto m = empirical_model(c);
    std::size_t checked = 0;
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t a = 0; a < 2; ++a) {
                if (c.visits()(h, s, a) < 10000) continue;
                ++checked;
                for (std::size_t sn = 0; sn < 3; ++sn)
                    EXPECT_NEAR(m.kernel(h, s, a, sn), inst.kernel(h, s, a, sn), 0.02);
            }
    EXPECT_EQ(checked, 24u);
}

TEST(Radii, ClosedFormsAtBenchmarkParameters) {
    VisitCounters c(kFull, kFullEpisodes, 0.01);
    const double L = c.log_factor();
    const auto m = empirical_model(c);
    const auto eps = epsilon_radius(c, m.kernel);
    EXPECT_NEAR(eps(0, 0, 0, 0), 14.0 / 3.0 * L, 1e-12);
    EXPECT_NEAR(eps(0, 0, 0, 0), 102.7, 0.05);
    const auto agg = epsilon_agg(c);
    EXPECT_NEAR(agg(0, 0, 0), 324.3, 0.05);
    const auto R = reward_cost_radius(c);
    EXPECT_NEAR(R(0, 0, 0), 4.691, 5e-4);
    EXPECT_NEAR(eta_constant(kFull, L), 3.92e10, 0.005e10);
    EXPECT_NEAR(eta_constant(kFull, L), (1710.0 + 2.0 * std::pow(30.0, 1.5) * 3.0 + 8.1e7) * L * L,
                1e-3);
    const auto dope = pessimism_bonus_dope(agg, 30);
    EXPECT_NEAR(dope(0, 0, 0), 19459.0, 3.0);
    Kernel ones = make_kernel(kFull, 1.0);
    EXPECT_NEAR(epsilon_star(c, ones)(0, 0, 0, 0), 2097.0, 1.0);
    EXPECT_NEAR(epsilon_star(c, make_kernel(kFull))(0, 0, 0, 0), 94.0 * L, 1e-9);
}

TEST(Radii, HoeffdingAtHundredVisits) {
    const auto c = visited({30, 3, 2}, kFullEpisodes, 100);
    EXPECT_NEAR(reward_cost_radius(c)(0, 0, 0), 0.469, 5e-4);
    EXPECT_NEAR(reward_cost_radius(c)(0, 1, 0), 4.691, 5e-4);
}

TEST(Radii, VanishWithManyVisits) {
    const Dims d{1, 1, 1};
    VisitCounters c(d, 2000000, 0.01);
    Trajectory t;
    t.steps = {{0, 0, 0, 0.0, 0.0, kNoState}};
    for (int i = 0; i < 1000001; ++i) c.record(t);
    const double L = c.log_factor();
    EXPECT_NEAR(reward_cost_radius(c)(0, 0, 0), std::sqrt(L / 1000001.0), 1e-15);
    EXPECT_LT(reward_cost_radius(c)(0, 0, 0), 0.01);
    EXPECT_NEAR(epsilon_agg(c)(0, 0, 0),
                2.0 * std::sqrt(L / 1e6) + 14.0 * L / 3e6, 1e-15);
}

TEST(Radii, EpsilonDecreasesWhenCountDoubles) {
    const Dims d{2, 2, 1};
    VisitCounters c(d, 1000, 0.05);
    auto feed = [&](int n) {
        for (int i = 0; i < n; ++i) c.record(two_step(0, 0, i % 2));
    };
    feed(10);
    const double before = epsilon_radius(c, empirical_model(c).kernel)(0, 0, 0, 1);
    feed(10);
    const double after = epsilon_radius(c, empirical_model(c).kernel)(0, 0, 0, 1);
    EXPECT_DOUBLE_EQ(empirical_model(c).kernel(0, 0, 0, 1), 0.5);
    EXPECT_LT(after, before);
}

TEST(Radii, AggregateDominatesSumOfEntries) {
    Rng rng(31);
    for (std::size_t rep = 0; rep < 50; ++rep) {
        const Dims d{3, 1 + rep % 4, 2};
        const auto inst = oracle::random_instance(d, rng);
        VisitCounters c(d, 1000, 0.05);
        const int episodes = rep * 7 % 60;
        for (int k = 0; k < episodes; ++k) c.record(sample_episode(inst, inst.baseline, {}, rng));
        const auto eps = epsilon_radius(c, empirical_model(c).kernel);
        const auto agg = epsilon_agg(c);
        for (std::size_t h = 0; h + 1 < d.horizon; ++h)
            for (std::size_t s = 0; s < d.states; ++s)
                for (std::size_t a = 0; a < d.actions; ++a) {
                    double sum = 0.0;
                    for (double e : eps.row(h, s, a)) sum += e;
                    EXPECT_LE(sum, agg(h, s, a) * (1.0 + 1e-12));
                }
    }
}

TEST(Radii, SingleStateReduction) {
    const Dims d{2, 1, 1};
    VisitCounters c(d, 100, 0.1);
    for (int i = 0; i < 7; ++i) c.record(two_step(0, 0, 0));
    EXPECT_DOUBLE_EQ(empirical_model(c).kernel(0, 0, 0, 0), 1.0);
    EXPECT_NEAR(epsilon_radius(c, empirical_model(c).kernel)(0, 0, 0, 0), epsilon_agg(c)(0, 0, 0),
                1e-12);
}

TEST(Radii, AllNonincreasingAlongARun) {
    const auto inst = build_benchmark_with_baseline(5, 3.0, 2.5, 7);
    VisitCounters c(inst.dims, 400, 0.01);
    Rng rng(8);
    BonusTables prev = compute_bonus_tables(c, Variant::dope_plus);
    StepFunction prev_dope = compute_bonus_tables(c, Variant::dope).bonus;
    for (int k = 0; k < 300; ++k) {
        c.record(sample_episode(inst, uniform_policy(inst.dims), {}, rng));
        const BonusTables cur = compute_bonus_tables(c, Variant::dope_plus);
        const StepFunction cur_dope = compute_bonus_tables(c, Variant::dope).bonus;
        for (std::size_t i = 0; i < cur.radius.size(); ++i) {
            EXPECT_LE(cur.radius.flat()[i], prev.radius.flat()[i]);
            EXPECT_LE(cur.eps_agg.flat()[i], prev.eps_agg.flat()[i]);
            EXPECT_LE(cur.bonus.flat()[i], prev.bonus.flat()[i]);
            EXPECT_LE(cur_dope.flat()[i], prev_dope.flat()[i]);
            EXPECT_GE(cur.bonus.flat()[i], 0.0);
        }
        prev = cur;
        prev_dope = cur_dope;
    }
}

TEST(Bonus, ScaleZeroAndUnitHorizon) {
    VisitCounters c(kFull, kFullEpisodes, 0.01);
    const auto agg = epsilon_agg(c);
    for (double u : pessimism_bonus_dopeplus(c, agg, 0.0).flat()) EXPECT_EQ(u, 0.0);
    const auto unit = pessimism_bonus_dope(agg, 1);
    EXPECT_DOUBLE_EQ(unit(0, 0, 0), 2.0 * agg(0, 0, 0));
}

TEST(Bonus, DopePlusClosedForm) {
    const Dims d{4, 2, 3};
    const auto c = visited(d, 500, 9);
    const double H = 4, S = 2, A = 3, K = 500, L = c.log_factor();
    const double eta = eta_constant(d, L);
    const auto agg = epsilon_agg(c);
    const auto u = pessimism_bonus_dopeplus(c, agg, 0.25);
    auto expected = [&](double agg_value, double n) {
        return 0.25 * (8.0 * std::sqrt(H) * agg_value + 4.0 * S * std::sqrt(H * A / K) +
                       (2.0 * std::sqrt(H * K / A) * L + eta) / n);
    };
    // (h=1, s=0, a=0) has N = 9, so the floor gives 8.
    EXPECT_NEAR(u(0, 0, 0), expected(agg(0, 0, 0), 8.0), 1e-12 * u(0, 0, 0));
    const double unvisited = 2.0 * std::sqrt(S * L) + 14.0 * S * L / 3.0;
    EXPECT_NEAR(u(0, 1, 2), expected(unvisited, 1.0), 1e-12 * u(0, 1, 2));
}

TEST(Estimators, ZeroBonusReducesToEmpirical) {
    const auto inst = build_benchmark_with_baseline(5, 3.0, 2.5, 7);
    VisitCounters c(inst.dims, 50, 0.1);
    Rng rng(4);
    for (int k = 0; k < 20; ++k) c.record(sample_episode(inst, inst.baseline, {}, rng));
    const auto m = empirical_model(c);
    const StepFunction zero = make_step_function(inst.dims);
    const double B = observation_cap(c.log_factor());
    const auto est = build_estimators(m, zero, zero, inst.budget, inst.baseline_cost, B);
    for (std::size_t i = 0; i < zero.size(); ++i) {
        EXPECT_EQ(est.cost.flat()[i], m.cost.flat()[i]);
        EXPECT_EQ(est.reward.flat()[i], std::min(B, m.reward.flat()[i]));
    }
}

TEST(Estimators, HugeBonusSaturatesRewardAtCap) {
    VisitCounters c(kFull, kFullEpisodes, 0.01);
    const auto t = compute_bonus_tables(c, Variant::dope);
    const auto est = build_estimators(t, 18.0, 15.0);
    for (double f : est.reward.flat()) EXPECT_DOUBLE_EQ(f, t.cap);
    EXPECT_NEAR(t.cap, 5.691, 5e-4);
}

TEST(Estimators, OrderingAndConfigErrors) {
    const auto inst = build_benchmark_with_baseline(5, 3.0, 2.5, 7);
    VisitCounters c(inst.dims, 1000, 0.01);
    Rng rng(12);
    for (int k = 0; k < 200; ++k) c.record(sample_episode(inst, uniform_policy(inst.dims), {}, rng));
    for (Variant v : {Variant::dope_plus, Variant::dope}) {
        BonusOptions opts{1e-3, false};
        const auto t = compute_bonus_tables(c, v, opts);
        const auto est = build_estimators(t, inst.budget, inst.baseline_cost, opts);
        for (std::size_t i = 0; i < est.cost.size(); ++i) {
            EXPECT_GE(est.cost.flat()[i], t.model.cost.flat()[i] + t.radius.flat()[i]);
            EXPECT_LE(est.reward.flat()[i], t.cap);
        }
    }
    EXPECT_THROW(build_estimators(compute_bonus_tables(c, Variant::dope), 2.0, 2.0), ConfigError);
}

TEST(Estimators, ScaleRadiusOption) {
    const auto inst = build_benchmark_with_baseline(5, 3.0, 2.5, 7);
    VisitCounters c(inst.dims, 1000, 0.01);
    Rng rng(2);
    for (int k = 0; k < 100; ++k) c.record(sample_episode(inst, inst.baseline, {}, rng));
    const BonusOptions opts{0.5, true};
    const auto t = compute_bonus_tables(c, Variant::dope, opts);
    const auto est = build_estimators(t, inst.budget, inst.baseline_cost, opts);
    for (std::size_t i = 0; i < est.cost.size(); ++i)
        EXPECT_NEAR(est.cost.flat()[i],
                    t.model.cost.flat()[i] + 0.5 * t.radius.flat()[i] + t.bonus.flat()[i], 1e-12);
}

TEST(EpsilonStar, ContainsDifferencesInsideConfidenceSet) {
    const auto inst = build_benchmark_with_baseline(4, 2.4, 2.0, 7);
    VisitCounters c(inst.dims, 2000, 0.01);
    Rng rng(15);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t checked = 0;
    for (int k = 1; k <= 400; ++k) {
        c.record(sample_episode(inst, uniform_policy(inst.dims), {}, rng));
        if (k % 40 != 0) continue;
        const auto m = empirical_model(c);
        const auto eps = epsilon_radius(c, m.kernel);
        const auto star = epsilon_star(c, inst.kernel);
        for (std::size_t h = 0; h < 3; ++h)
            for (std::size_t s = 0; s < 3; ++s)
                for (std::size_t a = 0; a < 2; ++a) {
                    std::vector<double> lo(3), hi(3), target(3);
                    bool truth_inside = true;
                    for (std::size_t sn = 0; sn < 3; ++sn) {
                        lo[sn] = std::max(0.0, m.kernel(h, s, a, sn) - eps(h, s, a, sn));
                        hi[sn] = std::min(1.0, m.kernel(h, s, a, sn) + eps(h, s, a, sn));
                        target[sn] = unit(rng);
                        const double p = inst.kernel(h, s, a, sn);
                        truth_inside = truth_inside && p >= lo[sn] && p <= hi[sn];
                    }
                    if (!truth_inside) continue;
                    const auto phat = project_onto_band(target, lo, hi);
                    for (std::size_t sn = 0; sn < 3; ++sn) {
                        EXPECT_LE(std::abs(phat[sn] - inst.kernel(h, s, a, sn)),
                                  star(h, s, a, sn) + 1e-12);
                        ++checked;
                    }
                }
    }
    EXPECT_GT(checked, 0u);
}
