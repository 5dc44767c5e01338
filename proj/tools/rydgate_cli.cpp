#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "rydgate/io.hpp"

using namespace rydgate::cli;

int main(int argc, char** argv) {
    CLI::App app{"Phase-only pulse synthesis for multi-target Rydberg C(Z^N) gates"};
    app.set_version_flag("--version", std::string(rydgate::kToolVersion));
    app.require_subcommand(1);

    Overrides ov;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    auto add_overrides = [&](CLI::App* cmd, bool noise, bool resume) {
        cmd->add_option("--seed", seed, "Override the root seed");
        cmd->add_option("--output,-o", output, "Override the output directory");
        if (noise) {
            cmd->add_flag("--no-noise", ov.no_noise, "Disable decay and position noise");
        }
        if (resume) {
            cmd->add_flag("--resume", ov.resume, "Continue from checkpoints / completed cells");
        }
    };

    std::string config;
    std::string pulse;

    auto* optimize = app.add_subcommand("optimize", "Train a pulse (multi-restart)");
    optimize->add_option("config", config, "Experiment config (JSON)")->required();
    add_overrides(optimize, true, true);

    auto* sweep = app.add_subcommand("sweep", "Best fidelity over a (T, R) grid");
    sweep->add_option("config", config, "Experiment config with a sweep block")->required();
    add_overrides(sweep, true, true);

    EvaluateOptions eval_opts;
    auto* evaluate = app.add_subcommand("evaluate", "Batched fidelity of a saved pulse");
    evaluate->add_option("pulse", pulse, "Pulse file (.csv or .json)")->required();
    evaluate->add_option("config", config, "Experiment config (JSON)")->required();
    evaluate->add_option("--samples", eval_opts.samples, "Displacement samples");
    add_overrides(evaluate, true, false);

    PtmOptions ptm_opts;
    auto* ptm = app.add_subcommand("ptm", "Pauli transfer map and deviation ranking");
    ptm->add_option("pulse", pulse, "Pulse file (.csv or .json)");
    ptm->add_option("config", config, "Experiment config (JSON)");
    ptm->add_flag("--self-test", ptm_opts.self_test, "Use the exact gate instead of a pulse");
    ptm->add_option("--targets", ptm_opts.n_targets, "Target count for --self-test");
    ptm->add_option("--samples", ptm_opts.samples, "Displacement samples to average");
    ptm->add_option("--threshold", ptm_opts.threshold, "Smallest deviation listed");
    ptm->add_flag("--svg", ptm_opts.svg, "Also write SVG heatmaps");
    add_overrides(ptm, true, false);

    auto* validate = app.add_subcommand("validate-config", "Parse and check a config");
    validate->add_option("config", config, "Experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }
    ov.seed = seed;
    ov.output_dir = output;

    return guarded(std::cerr, [&]() -> int {
        if (*optimize) {
            return cmd_optimize(config, ov, std::cout);
        }
        if (*sweep) {
            return cmd_sweep(config, ov, std::cout);
        }
        if (*evaluate) {
            return cmd_evaluate(pulse, config, ov, eval_opts, std::cout);
        }
        if (*ptm) {
            if (!ptm_opts.self_test && (pulse.empty() || config.empty())) {
                std::cerr << "error: ptm needs a pulse and a config (or --self-test)\n";
                return kInputError;
            }
            return cmd_ptm(pulse, config, ov, ptm_opts, std::cout);
        }
        return cmd_validate_config(config, std::cout);
    });
}
