// Command-line front end: run experiments, solve or validate instances.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dopeplus/dopeplus.hpp"
#include "dopeplus/experiment.hpp"

namespace {

using namespace dopeplus;

struct InstanceArgs {
    std::string instance;
    std::size_t horizon = 30;
    std::optional<double> budget;
    std::optional<double> baseline_cap;
    std::uint64_t baseline_seed = 7;
};

void add_instance_options(CLI::App& cmd, InstanceArgs& args) {
    cmd.add_option("--instance", args.instance, "instance JSON path or 'benchmark3'")->required();
    cmd.add_option("--horizon", args.horizon, "benchmark3 horizon H")->capture_default_str();
    cmd.add_option("--budget", args.budget, "benchmark3 budget (default 0.6 H)");
    cmd.add_option("--baseline-cap", args.baseline_cap,
                   "benchmark3 baseline cost cap (default 0.5 H)");
    cmd.add_option("--baseline-seed", args.baseline_seed, "benchmark3 baseline sampling seed")
        ->capture_default_str();
}

ExperimentConfig instance_config(const InstanceArgs& args, ExperimentConfig c = {}) {
    c.instance = args.instance;
    c.horizon = args.horizon;
    c.budget = args.budget;
    c.baseline_cap = args.baseline_cap;
    c.baseline_seed = args.baseline_seed;
    return c;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || item.front() == '-')
            throw CLI::ValidationError("--seeds", "'" + item + "' is not a nonnegative integer");
        seeds.push_back(v);
    }
    if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
    return seeds;
}

void parse_k0_mode(const std::string& text, ExperimentConfig& c) {
    if (text == "lp") {
        c.phase_rule = PhaseRule::lp_feasibility;
    } else if (text == "oracle") {
        c.phase_rule = PhaseRule::analytic_oracle;
    } else if (text.rfind("fixed:", 0) == 0) {
        c.phase_rule = PhaseRule::fixed;
        const std::string n = text.substr(6);
        if (n.empty() || n.find_first_not_of("0123456789") != std::string::npos)
            throw CLI::ValidationError("--k0-mode", "fixed:N needs a nonnegative integer N");
        c.baseline_episodes = std::stoull(n);
    } else {
        throw CLI::ValidationError("--k0-mode", "expected lp, fixed:N or oracle");
    }
}

void print_policy(const Policy& pi) {
    for (std::size_t h = 0; h < pi.extent(0); ++h)
        for (std::size_t s = 0; s < pi.extent(1); ++s) {
            std::cout << "pi h=" << h + 1 << " s=" << s << ":";
            for (double p : pi.row(h, s)) std::cout << ' ' << format_number(p);
            std::cout << '\n';
        }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safe exploration in tabular constrained MDPs: DOPE+ and DOPE"};
    app.require_subcommand(1);

    InstanceArgs run_inst;
    std::string variant = "both", seeds_text, k0_mode = "lp", profile = "experiment",
                schedule = "every";
    ExperimentConfig cfg;
    std::optional<double> bonus_scale;
    std::size_t workers = 0;
    auto* run_cmd = app.add_subcommand("run", "run learners and write per-run CSVs");
    add_instance_options(*run_cmd, run_inst);
    run_cmd->add_option("--variant", variant, "dope+, dope or both")
        ->check(CLI::IsMember({"dope+", "dope", "both"}))
        ->capture_default_str();
    run_cmd->add_option("--episodes", cfg.episodes, "number of episodes K")
        ->required()
        ->check(CLI::PositiveNumber);
    run_cmd->add_option("--delta", cfg.delta, "confidence parameter")->capture_default_str();
    run_cmd->add_option("--bonus-scale", bonus_scale, "bonus multiplier (overrides --profile)");
    run_cmd->add_option("--profile", profile, "bonus profile: theory (c = 1) or experiment")
        ->check(CLI::IsMember({"theory", "experiment"}))
        ->capture_default_str();
    run_cmd->add_option("--onset-fraction", cfg.onset_fraction,
                        "experiment profile: LP must be feasible by this fraction of K")
        ->capture_default_str();
    run_cmd->add_flag("--scale-radius", cfg.scale_radius, "also scale R_k by the bonus scale");
    run_cmd->add_option("--seeds", seeds_text, "comma-separated seeds")->required();
    std::string out_dir;
    run_cmd->add_option("--out", out_dir, "output directory")->required();
    run_cmd->add_flag("--lp-dump", cfg.lp_dump, "write every solved LP in CPLEX LP format");
    run_cmd->add_option("--k0-mode", k0_mode, "lp, fixed:N or oracle")->capture_default_str();
    run_cmd->add_option("--lp-schedule", schedule,
                        "every (default) or doubling (re-solve when a count doubles)")
        ->check(CLI::IsMember({"every", "doubling"}));
    run_cmd->add_option("--workers", workers, "worker threads (default: hardware threads)");

    InstanceArgs opt_inst;
    auto* opt_cmd = app.add_subcommand("solve-optimal", "print Vstar and the optimal policy");
    add_instance_options(*opt_cmd, opt_inst);

    InstanceArgs val_inst;
    auto* val_cmd = app.add_subcommand("validate", "check instance invariants");
    add_instance_options(*val_cmd, val_inst);

    InstanceArgs dump_inst;
    std::string dump_out;
    auto* dump_cmd = app.add_subcommand("dump-instance", "write the resolved instance as JSON");
    add_instance_options(*dump_cmd, dump_inst);
    dump_cmd->add_option("--out", dump_out, "output path")->required();

    try {
        app.parse(argc, argv);
        if (run_cmd->parsed()) {
            cfg = instance_config(run_inst, cfg);
            cfg.seeds = parse_seeds(seeds_text);
            parse_k0_mode(k0_mode, cfg);
            cfg.out_dir = out_dir;
            cfg.bonus_scale = bonus_scale;
            cfg.workers = workers;
            cfg.profile = profile == "theory" ? BonusProfile::theory : BonusProfile::experiment;
            cfg.lp_every_episode = schedule == "every";
            if (variant == "dope+") cfg.variants = {Variant::dope_plus};
            else if (variant == "dope") cfg.variants = {Variant::dope};
        }
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (run_cmd->parsed()) {
            const ExperimentResult r = run_experiment(cfg);
            std::cout << "Vstar " << format_number(r.optimal_value) << '\n';
            for (std::size_t i = 0; i < r.variants.size(); ++i) {
                const auto& v = r.variants[i];
                std::cout << to_string(v.variant) << " bonus_scale " << format_number(r.bonus_scales[i])
                          << " final_regret " << format_number(v.final_regret.mean) << " +- "
                          << format_number(v.final_regret.half_width) << " final_violation "
                          << format_number(v.final_violation.mean) << '\n';
            }
        } else if (opt_cmd->parsed()) {
            const CmdpInstance inst = resolve_instance(instance_config(opt_inst));
            const TrueOptimum opt = solve_true_optimum(inst);
            std::cout << "Vstar " << format_number(opt.value) << '\n';
            std::cout << "cost " << format_number(opt.cost) << '\n';
            print_policy(opt.policy);
        } else if (val_cmd->parsed()) {
            const CmdpInstance inst = resolve_instance(instance_config(val_inst));
            const auto problems = check_instance(inst);
            for (const auto& p : problems) std::cout << p << '\n';
            if (!problems.empty()) return 1;
            std::cout << "ok: H=" << inst.dims.horizon << " states=" << inst.dims.states
                      << " actions=" << inst.dims.actions << " budget=" << format_number(inst.budget)
                      << " baseline_cost=" << format_number(inst.baseline_cost) << '\n';
        } else if (dump_cmd->parsed()) {
            save_instance(resolve_instance(instance_config(dump_inst)), dump_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
