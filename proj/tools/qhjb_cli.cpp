// qhjb: train, evaluate and export distributional value tables for the
// particle environment.
//
//   qhjb run    --config run.cfg [--algo qtd] [--seed 3] [--steps 200000] [--out dir]
//   qhjb eval   --config run.cfg --checkpoint dir/checkpoint.csv [--out dir]
//   qhjb export --config run.cfg --checkpoint dir/checkpoint.csv [--out dir]

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qhjb/harness.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> algo;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> steps;
    std::optional<std::string> out;

    qhjb::ExperimentConfig resolve() const {
        qhjb::ExperimentConfig cfg = config.empty() ? qhjb::ExperimentConfig{} : qhjb::ExperimentConfig::from_file(config);
        if (algo) cfg.algo = *algo;
        if (seed) cfg.seed = *seed;
        if (steps) cfg.total_steps = *steps;
        if (out) cfg.out_dir = *out;
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
    auto* opt = cmd->add_option("--config", o.config, "key = value config file");
    if (config_required) opt->required();
    cmd->add_option("--out", o.out, "output directory (overrides out_dir)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous-time distributional RL on a finite-difference lattice"};
    app.require_subcommand(1);

    Overrides run_opts;
    auto* run = app.add_subcommand("run", "train an agent and write all artifacts");
    add_common(run, run_opts, false);
    run->add_option("--algo", run_opts.algo, "fdwgf or qtd");
    run->add_option("--seed", run_opts.seed, "random seed");
    run->add_option("--steps", run_opts.steps, "environment steps");

    Overrides eval_opts;
    std::string eval_checkpoint;
    auto* eval = app.add_subcommand("eval", "recompute diagnostics from a checkpoint");
    add_common(eval, eval_opts, true);
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint CSV")->required();

    Overrides export_opts;
    std::string export_checkpoint;
    auto* exp = app.add_subcommand("export", "write heatmap and quantile-scan CSVs from a checkpoint");
    add_common(exp, export_opts, true);
    exp->add_option("--checkpoint", export_checkpoint, "checkpoint CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = run_opts.resolve();
            const auto result = qhjb::run(cfg);
            std::cout << "algo=" << cfg.algo << " seed=" << cfg.seed << " steps=" << cfg.total_steps
                      << " episodes=" << result.episodes << " skipped=" << result.skipped_updates
                      << " mean_abs_err=" << result.profile.mean_abs_error()
                      << " mean_w1_err=" << result.profile.mean_w1_error() << " seconds=" << result.seconds << '\n';
        } else if (*eval) {
            const auto cfg = eval_opts.resolve();
            const auto profile = qhjb::evaluate_checkpoint(cfg, eval_checkpoint);
            std::cout << "max_abs_err=" << profile.max_abs_error() << " mean_abs_err=" << profile.mean_abs_error()
                      << " mean_w1_err=" << profile.mean_w1_error() << '\n';
        } else if (*exp) {
            const auto cfg = export_opts.resolve();
            qhjb::export_checkpoint(cfg, export_checkpoint);
        }
    } catch (const std::exception& e) {
        std::cerr << "qhjb: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
