#include <iostream>

#include <CLI11.hpp>

#include "agedist/cli.hpp"

namespace {

void add_common(CLI::App* cmd, agedist::cli::ExperimentSpec& spec, bool model_required = true) {
    auto* opt = cmd->add_option("--model", spec.model_path, "Model config (JSON)");
    if (model_required) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", spec.out, "Output path (default: stdout)");
    cmd->add_option("--seed", spec.seed, "Base RNG seed");
    cmd->add_option("--horizon", spec.horizon, "Simulated slots");
}

}  // namespace

int main(int argc, char** argv) {
    using namespace agedist::cli;
    CLI::App app{"Optimal age-distortion tradeoffs for packet selection under sporadic speaking times"};
    app.require_subcommand(1);
    ExperimentSpec spec;

    auto* tradeoff = app.add_subcommand("tradeoff", "Sweep eta with policy iteration; write points and converse lines");
    add_common(tradeoff, spec);
    tradeoff->add_option("--eta-list", spec.eta_list, "Comma-separated, strictly decreasing eta values");
    tradeoff->add_option("--eta-grid", spec.eta_grid, "hi:lo:count geometric grid; hi may be 'max', lo may be kN");
    tradeoff->add_option("--converse-out", spec.converse_out, "Converse CSV (default: <out>.converse.csv)");
    tradeoff->add_option("--save-policy", spec.policy_out, "Store the last solved policy as JSON");

    auto* strategies = app.add_subcommand("strategies", "Closed-form S1/S2/S3 curves plus the d_min reference");
    add_common(strategies, spec);
    strategies->add_option("--k-range", spec.k_range, "Window sizes, e.g. 1..20");
    strategies->add_option("--strategy", spec.strategy, "Subset, e.g. S1,S3 (default: all)");

    auto* bi = app.add_subcommand("bufferignorant", "Threshold policies on bit buffers, plain and Tunstall-parsed");
    add_common(bi, spec);
    bi->add_option("--tau-range", spec.tau_range, "Thresholds, e.g. 0..12");
    bi->add_option("--n-bits", spec.n_bits, "Bits per transmission, e.g. 3,6");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo estimate of (delta_e, d) for one policy");
    add_common(sim, spec);
    sim->add_option("--mode", spec.mode, "direct, erasure or bits")->check(CLI::IsMember({"direct", "erasure", "bits"}));
    sim->add_option("--policy", spec.policy_in, "Stored policy from `tradeoff --save-policy`");
    sim->add_option("--strategy", spec.strategy, "S1, S2, S3 or latest");
    sim->add_option("--k", spec.window, "Window for a named strategy");
    sim->add_option("--tau", spec.tau, "Threshold for bits mode");
    sim->add_option("--n-bits", spec.n_bits, "Bits per transmission for bits mode");
    sim->add_flag("--tunstall", spec.tunstall, "Parse skipped chunks with a Tunstall dictionary");

    auto* verify = app.add_subcommand("verify", "Run the acceptance battery");
    add_common(verify, spec, false);
    verify->add_option("--lambda-perturbation", spec.lambda_perturbation, "Offset added to J*(eta) (negative control)");
    verify->callback([&] {
        if (!spec.model_path.empty() && !std::ifstream(spec.model_path))
            throw CLI::ValidationError("--model", "cannot open " + spec.model_path);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    if (tradeoff->parsed()) return run(cmd_tradeoff, spec);
    if (strategies->parsed()) return run(cmd_strategies, spec);
    if (bi->parsed()) return run(cmd_bufferignorant, spec);
    if (sim->parsed()) return run(cmd_simulate, spec);
    return run(cmd_verify, spec);
}
