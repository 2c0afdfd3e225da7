#pragma once

// Instance files, multi-seed experiments and their CSV / JSON outputs.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dopeplus/cmdp.hpp"
#include "dopeplus/environment.hpp"
#include "dopeplus/errors.hpp"
#include "dopeplus/estimation.hpp"
#include "dopeplus/runner.hpp"

namespace dopeplus {

using Json = nlohmann::json;

namespace detail {

inline std::size_t json_depth(const Json& j) {
    std::size_t depth = 0;
    const Json* cur = &j;
    while (cur->is_array()) {
        ++depth;
        if (cur->empty()) break;
        cur = &cur->front();
    }
    return depth;
}

inline double json_number(const Json& j, const std::string& field) {
    if (!j.is_number()) throw ParseError("field '" + field + "' must be a number");
    return j.get<double>();
}

inline std::size_t json_count(const Json& obj, const char* key) {
    if (!obj.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
    const Json& j = obj.at(key);
    if (!j.is_number_integer() && !j.is_number_unsigned())
        throw ParseError(std::string("field '") + key + "' must be a nonnegative integer");
    const auto v = j.get<std::int64_t>();
    if (v < 1) throw ParseError(std::string("field '") + key + "' must be positive");
    return static_cast<std::size_t>(v);
}

inline void require_length(const Json& j, std::size_t n, const std::string& field) {
    if (!j.is_array() || j.size() != n)
        throw ParseError("field '" + field + "' must be an array of length " + std::to_string(n));
}

/// Reads an [s][a] or [h][s][a] table into a step function.
template <class Tag>
Tensor<3, Tag> read_step_table(const Json& j, const Dims& d, const std::string& field) {
    Tensor<3, Tag> out({d.horizon, d.states, d.actions});
    const std::size_t depth = json_depth(j);
    if (depth != 2 && depth != 3)
        throw ParseError("field '" + field + "' must be indexed [s][a] or [h][s][a]");
    const bool per_step = depth == 3;
    if (per_step) require_length(j, d.horizon, field);
    for (std::size_t h = 0; h < d.horizon; ++h) {
        const Json& layer = per_step ? j[h] : j;
        const std::string where = per_step ? field + "[" + std::to_string(h) + "]" : field;
        require_length(layer, d.states, where);
        for (std::size_t s = 0; s < d.states; ++s) {
            require_length(layer[s], d.actions, where + "[" + std::to_string(s) + "]");
            for (std::size_t a = 0; a < d.actions; ++a)
                out(h, s, a) = json_number(layer[s][a], where + "[" + std::to_string(s) + "][" +
                                                            std::to_string(a) + "]");
        }
    }
    return out;
}

inline Kernel read_kernel(const Json& j, const Dims& d) {
    Kernel out = make_kernel(d);
    const std::size_t steps = d.horizon - 1;
    const std::size_t depth = json_depth(j);
    if (j.is_array() && j.empty() && steps == 0) return out;
    if (depth != 3 && depth != 4) throw ParseError("field 'P' must be indexed [s][a][s'] or [h][s][a][s']");
    const bool per_step = depth == 4;
    // Per-step kernels may list H - 1 transitions or H (the last one unused).
    if (per_step && !(j.size() == steps || j.size() == d.horizon))
        throw ParseError("field 'P' must list H - 1 or H steps");
    const std::size_t listed = per_step ? j.size() : 1;
    for (std::size_t h = 0; h < std::max(steps, per_step ? listed : std::size_t{0}); ++h) {
        const Json& layer = per_step ? j[h] : j;
        const std::string where = per_step ? "P[" + std::to_string(h) + "]" : "P";
        require_length(layer, d.states, where);
        for (std::size_t s = 0; s < d.states; ++s) {
            require_length(layer[s], d.actions, where + "[" + std::to_string(s) + "]");
            for (std::size_t a = 0; a < d.actions; ++a) {
                const std::string cell = where + "[" + std::to_string(s) + "][" + std::to_string(a) + "]";
                require_length(layer[s][a], d.states, cell);
                std::vector<double> row(d.states);
                for (std::size_t sn = 0; sn < d.states; ++sn)
                    row[sn] = json_number(layer[s][a][sn], cell + "[" + std::to_string(sn) + "]");
                if (!is_distribution(row, kRowSumTolerance))
                    throw ParseError("field 'P': row (h=" + std::to_string(h + 1) + ", s=" +
                                     std::to_string(s) + ", a=" + std::to_string(a) +
                                     ") is not a probability distribution");
                if (h < steps)
                    for (std::size_t sn = 0; sn < d.states; ++sn) out(h, s, a, sn) = row[sn];
            }
        }
    }
    if (!per_step)
        for (std::size_t h = 1; h < steps; ++h)
            for (std::size_t s = 0; s < d.states; ++s)
                for (std::size_t a = 0; a < d.actions; ++a)
                    for (std::size_t sn = 0; sn < d.states; ++sn) out(h, s, a, sn) = out(0, s, a, sn);
    return out;
}

template <class Table>
bool same_every_step(const Table& t) {
    for (std::size_t h = 1; h < t.extent(0); ++h)
        for (std::size_t s = 0; s < t.extent(1); ++s) {
            const auto a = t.row(h, s);
            const auto b = t.row(0, s);
            if (!std::equal(a.begin(), a.end(), b.begin())) return false;
        }
    return true;
}

inline bool kernel_same_every_step(const Kernel& k) {
    for (std::size_t h = 1; h < k.extent(0); ++h)
        for (std::size_t s = 0; s < k.extent(1); ++s)
            for (std::size_t a = 0; a < k.extent(2); ++a) {
                const auto x = k.row(h, s, a);
                const auto y = k.row(0, s, a);
                if (!std::equal(x.begin(), x.end(), y.begin())) return false;
            }
    return true;
}

template <class Table>
Json write_step_table(const Table& t, bool stationary) {
    auto layer = [&](std::size_t h) {
        Json out = Json::array();
        for (std::size_t s = 0; s < t.extent(1); ++s) {
            Json row = Json::array();
            for (double v : t.row(h, s)) row.push_back(v);
            out.push_back(std::move(row));
        }
        return out;
    };
    if (stationary) return layer(0);
    Json out = Json::array();
    for (std::size_t h = 0; h < t.extent(0); ++h) out.push_back(layer(h));
    return out;
}

inline Json write_kernel(const Kernel& k, bool stationary) {
    auto layer = [&](std::size_t h) {
        Json out = Json::array();
        for (std::size_t s = 0; s < k.extent(1); ++s) {
            Json by_action = Json::array();
            for (std::size_t a = 0; a < k.extent(2); ++a) {
                Json row = Json::array();
                for (double v : k.row(h, s, a)) row.push_back(v);
                by_action.push_back(std::move(row));
            }
            out.push_back(std::move(by_action));
        }
        return out;
    };
    if (stationary && k.extent(0) > 0) return layer(0);
    Json out = Json::array();
    for (std::size_t h = 0; h < k.extent(0); ++h) out.push_back(layer(h));
    return out;
}

}  // namespace detail

/// Parses and validates an instance document. Errors name the JSON field.
inline CmdpInstance instance_from_json(const Json& j) {
    if (!j.is_object()) throw ParseError("instance must be a JSON object");
    CmdpInstance inst;
    inst.dims = {detail::json_count(j, "H"), detail::json_count(j, "states"),
                 detail::json_count(j, "actions")};
    const Dims& d = inst.dims;
    for (const char* key : {"stationary", "P", "f", "g", "p0", "budget", "baseline"})
        if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
    if (!j["stationary"].is_boolean()) throw ParseError("field 'stationary' must be a boolean");
    inst.stationary = j["stationary"].get<bool>();

    inst.kernel = detail::read_kernel(j["P"], d);
    inst.reward = detail::read_step_table<StepTag>(j["f"], d, "f");
    inst.cost = detail::read_step_table<StepTag>(j["g"], d, "g");
    if (inst.stationary) {
        if (!detail::kernel_same_every_step(inst.kernel))
            throw ParseError("field 'P' varies with h but 'stationary' is true");
        if (!detail::same_every_step(inst.reward))
            throw ParseError("field 'f' varies with h but 'stationary' is true");
        if (!detail::same_every_step(inst.cost))
            throw ParseError("field 'g' varies with h but 'stationary' is true");
    }
    detail::require_length(j["p0"], d.states, "p0");
    for (std::size_t s = 0; s < d.states; ++s)
        inst.initial.push_back(detail::json_number(j["p0"][s], "p0[" + std::to_string(s) + "]"));
    inst.budget = detail::json_number(j["budget"], "budget");

    const Json& b = j["baseline"];
    if (!b.is_object() || !b.contains("policy") || !b.contains("cost"))
        throw ParseError("field 'baseline' must be an object with 'policy' and 'cost'");
    inst.baseline = detail::read_step_table<PolicyTag>(b["policy"], d, "baseline.policy");
    inst.baseline_cost = detail::json_number(b["cost"], "baseline.cost");

    const auto problems = check_instance(inst);
    if (!problems.empty()) throw ParseError("invalid instance: " + problems.front());
    return inst;
}

inline Json instance_to_json(const CmdpInstance& inst) {
    Json j;
    j["H"] = inst.dims.horizon;
    j["states"] = inst.dims.states;
    j["actions"] = inst.dims.actions;
    j["stationary"] = inst.stationary;
    j["P"] = detail::write_kernel(inst.kernel, inst.stationary);
    j["f"] = detail::write_step_table(inst.reward, inst.stationary);
    j["g"] = detail::write_step_table(inst.cost, inst.stationary);
    j["p0"] = inst.initial;
    j["budget"] = inst.budget;
    j["baseline"] = {{"policy", detail::write_step_table(inst.baseline,
                                                         detail::same_every_step(inst.baseline))},
                     {"cost", inst.baseline_cost}};
    return j;
}

inline CmdpInstance load_instance(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open instance file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return instance_from_json(j);
}

inline void save_instance(const CmdpInstance& inst, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write instance file " + path.string());
    out << instance_to_json(inst).dump(1) << '\n';
}

enum class BonusProfile { theory, experiment };

struct ExperimentConfig {
    std::string instance = "benchmark3";  // file path or the builtin name
    // Builtin benchmark shape; budget and baseline cap default to 0.6H, 0.5H.
    std::size_t horizon = 30;
    std::optional<double> budget;
    std::optional<double> baseline_cap;
    std::uint64_t baseline_seed = 7;

    std::vector<Variant> variants{Variant::dope_plus, Variant::dope};
    std::size_t episodes = 1000;
    double delta = 0.01;
    BonusProfile profile = BonusProfile::experiment;
    std::optional<double> bonus_scale;  // overrides the profile for every variant
    bool scale_radius = false;
    double onset_fraction = 0.05;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out_dir = "out";
    bool lp_dump = false;
    PhaseRule phase_rule = PhaseRule::lp_feasibility;
    std::size_t baseline_episodes = 0;
    bool lp_every_episode = true;
    NoiseModel noise;
    std::size_t workers = 0;  // 0: hardware concurrency
};

inline void validate_config(const ExperimentConfig& c) {
    if (c.episodes < 1) throw ConfigError("K must be at least 1");
    if (c.seeds.empty()) throw ConfigError("at least one seed is required");
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
        throw ConfigError("seeds must be distinct");
    if (c.variants.empty()) throw ConfigError("at least one variant is required");
    if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (c.bonus_scale && !(*c.bonus_scale >= 0.0 && std::isfinite(*c.bonus_scale)))
        throw ConfigError("bonus scale must be a finite nonnegative number");
}

inline CmdpInstance resolve_instance(const ExperimentConfig& c) {
    if (c.instance == "benchmark3") {
        const double H = static_cast<double>(c.horizon);
        return build_benchmark_with_baseline(c.horizon, c.budget.value_or(0.6 * H),
                                             c.baseline_cap.value_or(0.5 * H), c.baseline_seed);
    }
    return load_instance(c.instance);
}

/// Formats a double with 17 significant digits.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string run_file_stem(Variant v, std::uint64_t seed) {
    return std::string(v == Variant::dope_plus ? "dopeplus" : "dope") + "_seed" + std::to_string(seed);
}

inline constexpr const char* kCsvHeader =
    "seed,episode,phase,lp_feasible,exp_reward,exp_cost,inst_reward,inst_cost,cum_regret,"
    "cum_violation";

inline void write_run_csv(const RunLog& log, std::ostream& os) {
    os << kCsvHeader << '\n';
    for (const auto& e : log.episodes) {
        os << log.seed << ',' << e.episode << ',' << to_string(e.phase) << ','
           << (e.lp_feasible ? 1 : 0) << ',' << format_number(e.expected_reward) << ','
           << format_number(e.expected_cost) << ',' << format_number(e.realized_reward) << ','
           << format_number(e.realized_cost) << ',' << format_number(e.cum_regret) << ','
           << format_number(e.cum_violation) << '\n';
    }
}

struct ExperimentResult {
    double optimal_value = 0.0;
    std::vector<VariantSummary> variants;
    std::vector<double> bonus_scales;  // parallel to variants
};

namespace detail {

inline Json interval_json(const IntervalSummary& s) {
    return {{"mean", s.mean},
            {"half_width", s.half_width},
            {"lower", s.mean - s.half_width},
            {"upper", s.mean + s.half_width}};
}

inline Json run_json(const RunLog& log) {
    std::size_t kernel_misses = 0, estimate_misses = 0, lp_episodes = 0, checked = 0, valid = 0;
    double max_lp_cost = 0.0;
    for (const auto& e : log.episodes) {
        kernel_misses += !e.kernel_covered;
        estimate_misses += !e.estimates_covered;
        if (e.phase == Phase::lp) {
            ++lp_episodes;
            if (e.lp_resolved) max_lp_cost = std::max(max_lp_cost, e.lp_cost);
        }
        if (e.pessimism_valid) {
            ++checked;
            valid += *e.pessimism_valid;
        }
    }
    const auto& last = log.episodes.back();
    return {{"seed", log.seed},
            {"csv", run_file_stem(log.variant, log.seed) + ".csv"},
            {"final_regret", last.cum_regret},
            {"final_violation", last.cum_violation},
            {"first_lp_episode", log.first_lp_episode()},
            {"lp_episodes", lp_episodes},
            {"kernel_coverage_failures", kernel_misses},
            {"estimate_coverage_failures", estimate_misses},
            {"max_lp_budget_use", max_lp_cost},
            {"pessimism_valid_rate",
             checked ? static_cast<double>(valid) / static_cast<double>(checked) : 1.0}};
}

}  // namespace detail

inline Json summary_json(const ExperimentConfig& c, const ExperimentResult& r) {
    Json j;
    j["instance"] = c.instance;
    j["episodes"] = c.episodes;
    j["delta"] = c.delta;
    j["seeds"] = c.seeds;
    j["profile"] = c.profile == BonusProfile::theory ? "theory" : "experiment";
    j["lp_schedule"] = c.lp_every_episode ? "every" : "doubling (non-faithful)";
    j["optimal_value"] = r.optimal_value;
    Json variants = Json::object();
    for (std::size_t i = 0; i < r.variants.size(); ++i) {
        const auto& v = r.variants[i];
        Json runs = Json::array();
        for (const auto& log : v.runs) runs.push_back(detail::run_json(log));
        variants[to_string(v.variant)] = {{"bonus_scale", r.bonus_scales[i]},
                                          {"final_regret", detail::interval_json(v.final_regret)},
                                          {"final_violation", detail::interval_json(v.final_violation)},
                                          {"runs", std::move(runs)}};
    }
    j["variants"] = std::move(variants);
    return j;
}

inline constexpr const char* kIncompleteMarker = "INCOMPLETE";

/// Bonus scale each variant runs with under `c`.
inline double resolve_bonus_scale(const ExperimentConfig& c, const CmdpInstance& inst, Variant v) {
    if (c.bonus_scale) return *c.bonus_scale;
    if (c.profile == BonusProfile::theory) return 1.0;
    BonusOptions opts;
    opts.scale_radius = c.scale_radius;
    return calibrate_bonus_scale(inst, v, c.episodes, c.delta, c.seeds, c.onset_fraction, opts,
                                 c.noise)
        .scale;
}

/// Runs every (variant, seed) pair, writing one CSV per run and a summary.
/// On failure leaves an INCOMPLETE marker holding the error and rethrows.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    const fs::path marker = c.out_dir / kIncompleteMarker;
    {
        std::ofstream(marker) << "running\n";
    }
    try {
        validate_config(c);
        const CmdpInstance inst = resolve_instance(c);
        const TrueOptimum opt = solve_true_optimum(inst);

        ExperimentResult result;
        result.optimal_value = opt.value;
        std::vector<AlgoConfig> configs;
        for (Variant v : c.variants) {
            AlgoConfig a;
            a.variant = v;
            a.episodes = c.episodes;
            a.delta = c.delta;
            a.bonus.scale = resolve_bonus_scale(c, inst, v);
            a.bonus.scale_radius = c.scale_radius;
            a.phase_rule = c.phase_rule;
            a.baseline_episodes = c.baseline_episodes;
            a.lp_every_episode = c.lp_every_episode;
            a.noise = c.noise;
            configs.push_back(a);
            result.bonus_scales.push_back(a.bonus.scale);
            VariantSummary s;
            s.variant = v;
            s.runs.resize(c.seeds.size());
            result.variants.push_back(std::move(s));
        }

        const std::size_t n = c.seeds.size();
        run_parallel(configs.size() * n, c.workers ? c.workers : default_workers(),
                     [&](std::size_t job) {
                         const std::size_t vi = job / n, si = job % n;
                         AlgoConfig a = configs[vi];
                         a.seed = c.seeds[si];
                         const std::string stem = run_file_stem(a.variant, a.seed);
                         if (c.lp_dump) a.lp_dump_dir = c.out_dir / "lp" / stem;
                         RunLog log = run(inst, a, opt);
                         std::ofstream csv(c.out_dir / (stem + ".csv"));
                         write_run_csv(log, csv);
                         if (!csv) throw std::runtime_error("failed to write " + stem + ".csv");
                         result.variants[vi].runs[si] = std::move(log);
                     });

        for (auto& v : result.variants) {
            std::vector<double> regret, violation;
            for (const auto& log : v.runs) {
                regret.push_back(log.episodes.back().cum_regret);
                violation.push_back(log.episodes.back().cum_violation);
            }
            v.final_regret = summarize(regret);
            v.final_violation = summarize(violation);
        }
        std::ofstream(c.out_dir / "summary.json") << summary_json(c, result).dump(2) << '\n';
        fs::remove(marker);
        return result;
    } catch (const std::exception& e) {
        std::ofstream(marker) << e.what() << '\n';
        throw;
    }
}

}  // namespace dopeplus
