#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "rydgate/config.hpp"
#include "rydgate/errors.hpp"
#include "rydgate/geometry.hpp"
#include "rydgate/io.hpp"
#include "rydgate/optimizer.hpp"
#include "rydgate/ptm.hpp"
#include "rydgate/rng.hpp"
#include "rydgate/sweep.hpp"

namespace rydgate::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kEvaluateStream = 0xe7a1;
constexpr std::uint64_t kPtmStream = 0x97e;

ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
    if (!fs::exists(path)) {
        throw ConfigError(path, "config file not found");
    }
    ExperimentConfig cfg = load_config(path);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.optimizer.seed = *o.seed;
    }
    if (o.output_dir) {
        cfg.output_dir = *o.output_dir;
    }
    if (o.no_noise) {
        cfg.noise_enabled = false;
        cfg.noise = NoiseModel::ideal();
        if (cfg.sweep) {
            cfg.sweep->noise_enabled = false;
        }
    }
    return cfg;
}

PulseRecord load_pulse_checked(const std::string& path) {
    if (!fs::exists(path)) {
        throw ConfigError(path, "pulse file not found");
    }
    PulseRecord p = load_pulse(path);
    p.validate();
    return p;
}

// Physics of the config with the pulse's gate, geometry and timing.
ProblemSpec problem_for_pulse(const ExperimentConfig& cfg, const PulseRecord& pulse) {
    ProblemSpec problem = cfg.problem();
    if (cfg.positions_um.empty()) {
        problem.layout = place_atoms(pulse.n_targets, pulse.radius_um);
    } else if (static_cast<int>(cfg.positions_um.size()) != pulse.n_targets + 1) {
        throw ConfigError("geometry.positions_um", "atom count does not match the pulse");
    }
    problem.target = pulse.target();
    problem.duration_ns = pulse.duration_ns;
    problem.n_segments = pulse.n_segments;
    problem.ramp_ns = pulse.ramp_ns;
    problem.constants.omega_max = pulse.omega_max;
    problem.validate();
    return problem;
}

std::string text_of(const std::function<void(std::ostream&)>& write) {
    std::ostringstream out;
    write(out);
    return out.str();
}

std::string fixed(double v, int digits) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

PulseRecord pulse_from_result(const ExperimentConfig& cfg, const TrainingResult& r,
                              const std::string& hash) {
    PulseRecord p;
    p.n_targets = cfg.n_targets;
    p.radius_um = cfg.radius_um;
    p.duration_ns = cfg.duration_ns;
    p.n_segments = cfg.n_segments;
    p.ramp_ns = cfg.ramp_ns;
    p.omega_max = cfg.constants.omega_max;
    p.phases.assign(r.best.phases().begin(), r.best.phases().end());
    p.compensation_phases.assign(r.best.theta().begin(), r.best.theta().end());
    p.compensation_enabled = cfg.compensation_phases;
    p.config_hash = hash;
    p.seed = r.seed;
    p.fidelity = r.final_fidelity;
    return p;
}

json sweep_to_json(const SweepResult& result, const std::string& hash) {
    json cells = json::array();
    for (const auto& c : result.cells) {
        cells.push_back({{"duration_ns", c.duration_ns},
                         {"radius_um", c.radius_um},
                         {"best_fidelity", c.best_fidelity},
                         {"restarts", c.restarts},
                         {"seed", c.seed},
                         {"restart_fidelities", c.restart_fidelities},
                         {"best_params", c.best_params}});
    }
    return {{"format", "rydgate-sweep-1"},
            {"config_hash", hash},
            {"durations_ns", result.durations_ns},
            {"radii_um", result.radii_um},
            {"cells", cells}};
}

// Runs `body`, then writes the manifest whether it succeeded or not.
int with_manifest(const fs::path& dir, RunManifest m, const std::function<void(RunManifest&)>& body) {
    fs::create_directories(dir);
    m.started_at = utc_timestamp();
    try {
        body(m);
    } catch (const NumericalFailure& e) {
        m.status = "failed";
        m.message = e.what();
        m.finished_at = utc_timestamp();
        write_manifest(dir, m);
        throw;
    }
    m.finished_at = utc_timestamp();
    write_manifest(dir, m);
    return kOk;
}

}  // namespace

int cmd_optimize(const std::string& config_path, const Overrides& o, std::ostream& log) {
    const ExperimentConfig cfg = load_with_overrides(config_path, o);
    const ProblemSpec problem = cfg.problem();
    problem.validate();
    const std::string hash = config_hash(cfg);
    const fs::path dir = cfg.output_dir;
    const fs::path ckpt_dir = dir / "checkpoints";

    RunManifest m;
    m.command = "optimize";
    m.config_hash = hash;
    m.files = {"pulse.csv", "pulse.json", "result.json", "loss_history.csv", "restarts.csv",
               "config.json"};
    return with_manifest(dir, m, [&](RunManifest& man) {
        if (!o.resume) {
            fs::remove_all(ckpt_dir);
        }
        fs::create_directories(ckpt_dir);
        write_file_atomic(dir / "config.json", config_to_json(cfg));

        OptimizerConfig oc = cfg.optimizer;
        oc.seed = cfg.seed;
        for (int r = 0; r < oc.restarts; ++r) {
            man.seeds.push_back(restart_seed(oc.seed, r));
        }
        TrainHooks hooks;
        hooks.checkpoint_path = (ckpt_dir / "train").string();
        log << "optimize: N=" << cfg.n_targets << " R=" << cfg.radius_um
            << " um T=" << cfg.duration_ns << " ns, " << oc.restarts << " restarts, noise "
            << (cfg.noise_enabled ? "on" : "off") << '\n';
        const MultiRestartResult runs = multi_restart(oc, problem, hooks);
        for (const auto& f : runs.failures) {
            log << "  failed " << f << '\n';
        }
        const TrainingResult& best = runs.best();

        std::string table = "seed,fidelity,fidelity_std,validation_fidelity,best_iteration,"
                            "iterations_run,max_phase_jump_rad,stage\n";
        for (const auto& r : runs.results) {
            std::ostringstream row;
            row << std::setprecision(17) << r.seed << ',' << r.final_fidelity << ',' << r.final_std
                << ',' << r.validation_fidelity << ',' << r.best_iteration << ','
                << r.iterations_run << ',' << r.max_phase_jump << ',' << r.stage << '\n';
            table += row.str();
        }
        write_file_atomic(dir / "restarts.csv", table);

        const PulseRecord pulse = pulse_from_result(cfg, best, hash);
        write_file_atomic(dir / "pulse.csv", text_of([&](std::ostream& s) { write_pulse_csv(s, pulse); }));
        write_file_atomic(dir / "pulse.json",
                          text_of([&](std::ostream& s) { write_pulse_json(s, pulse); }));
        write_file_atomic(dir / "result.json", text_of([&](std::ostream& s) {
                              write_training_result_json(s, best, cfg.n_targets, hash);
                          }));
        write_file_atomic(dir / "loss_history.csv", text_of([&](std::ostream& s) {
                              write_loss_history_csv(s, best.history);
                          }));
        log << "best fidelity " << fixed(best.final_fidelity, 6) << " +- "
            << fixed(best.final_std, 6) << ", per-CZ error "
            << fixed(100.0 * per_cz_error(std::clamp(best.final_fidelity, 0.0, 1.0), cfg.n_targets), 4)
            << "%, max phase jump " << fixed(best.max_phase_jump, 3) << " rad\n";
    });
}

int cmd_sweep(const std::string& config_path, const Overrides& o, std::ostream& log) {
    const ExperimentConfig cfg = load_with_overrides(config_path, o);
    if (!cfg.sweep) {
        throw ConfigError("sweep", "config has no sweep block");
    }
    cfg.sweep->validate();
    const ProblemSpec base = cfg.problem();
    const std::string hash = config_hash(cfg);
    const fs::path dir = cfg.output_dir;

    RunManifest m;
    m.command = "sweep";
    m.config_hash = hash;
    m.files = {"sweep.csv", "sweep.json", "fidelity_vs_duration.csv", "config.json"};
    return with_manifest(dir, m, [&](RunManifest& man) {
        OptimizerConfig oc = cfg.optimizer;
        oc.seed = cfg.seed;
        man.seeds.push_back(oc.seed);

        SweepHooks hooks;
        std::vector<SweepCell> done;
        if (o.resume && fs::exists(dir / "sweep.csv")) {
            // Only trust a partial grid produced by the same configuration.
            std::ifstream prior_cfg(dir / "config.json");
            std::stringstream buf;
            buf << prior_cfg.rdbuf();
            if (buf.str() != config_to_json(cfg)) {
                throw ConfigError((dir / "config.json").string(),
                                  "existing sweep was produced by a different config");
            }
            std::ifstream in(dir / "sweep.csv");
            hooks.completed = read_sweep_csv(in);
            done = hooks.completed;
            log << "resume: " << done.size() << " cells already complete\n";
        }
        write_file_atomic(dir / "config.json", config_to_json(cfg));

        std::mutex writer;
        SweepResult partial;
        partial.cells = done;
        hooks.on_cell_done = [&](const SweepCell& cell) {
            std::lock_guard lock(writer);
            partial.cells.push_back(cell);
            write_file_atomic(dir / "sweep.csv",
                              text_of([&](std::ostream& s) { write_sweep_csv(s, partial); }));
            log << "  T=" << cell.duration_ns << " ns R=" << cell.radius_um
                << " um best " << fixed(cell.best_fidelity, 6) << '\n';
        };
        log << "sweep: " << cfg.sweep->durations_ns.size() << " durations x "
            << cfg.sweep->radii_um.size() << " radii, " << oc.restarts << " restarts per cell\n";
        const SweepResult result = run_sweep(*cfg.sweep, base, oc, hooks);

        write_file_atomic(dir / "sweep.csv",
                          text_of([&](std::ostream& s) { write_sweep_csv(s, result); }));
        write_file_atomic(dir / "sweep.json", sweep_to_json(result, hash).dump(2) + "\n");
        write_file_atomic(dir / "fidelity_vs_duration.csv",
                          text_of([&](std::ostream& s) { write_sweep_plot_csv(s, result); }));
    });
}

int cmd_evaluate(const std::string& pulse_path, const std::string& config_path, const Overrides& o,
                 const EvaluateOptions& e, std::ostream& log) {
    const PulseRecord pulse = load_pulse_checked(pulse_path);
    const ExperimentConfig cfg = load_with_overrides(config_path, o);
    const ProblemSpec problem = problem_for_pulse(cfg, pulse);
    const int samples = e.samples.value_or(cfg.optimizer.eval_samples);
    if (samples < 1) {
        throw ConfigError("--samples", "must be at least 1");
    }
    const std::uint64_t seed = derive_seed(cfg.seed, kEvaluateStream);
    const auto [mean, std] =
        batch_fidelity(problem.schedule(pulse.phases), problem.layout, problem.noise, problem.target,
                       samples, seed, problem.constants);

    const fs::path dir = cfg.output_dir;
    RunManifest m;
    m.command = "evaluate";
    m.config_hash = config_hash(cfg);
    m.files = {"evaluation.json"};
    return with_manifest(dir, m, [&](RunManifest& man) {
        man.seeds = {seed};
        json report = {{"format", "rydgate-evaluation-1"},
                       {"pulse", pulse_path},
                       {"n_targets", pulse.n_targets},
                       {"radius_um", pulse.radius_um},
                       {"duration_ns", pulse.duration_ns},
                       {"samples", problem.noise.has_motion() ? samples : 1},
                       {"seed", seed},
                       {"decay", problem.noise.has_decay()},
                       {"motion", problem.noise.has_motion()},
                       {"fidelity", mean},
                       {"fidelity_std", std},
                       {"per_cz_error", per_cz_error(std::clamp(mean, 0.0, 1.0), pulse.n_targets)},
                       {"config_hash", man.config_hash}};
        write_file_atomic(dir / "evaluation.json", report.dump(2) + "\n");
        log << "fidelity " << fixed(mean, 6) << " +- " << fixed(std, 6) << ", per-CZ error "
            << fixed(100.0 * per_cz_error(std::clamp(mean, 0.0, 1.0), pulse.n_targets), 4) << "%\n";
    });
}

int cmd_ptm(const std::string& pulse_path, const std::string& config_path, const Overrides& o,
            const PtmOptions& p, std::ostream& log) {
    PauliTransferMap real;
    PauliTransferMap ideal;
    ExperimentConfig cfg;
    if (p.self_test) {
        if (p.n_targets < 0 || p.n_targets + 1 > 4) {
            throw UnsupportedSize("PTM supports at most four atoms");
        }
        if (!config_path.empty()) {
            cfg = load_with_overrides(config_path, o);
        } else if (o.output_dir) {
            cfg.output_dir = *o.output_dir;
        }
        GateTarget gate{p.n_targets, {}, false};
        real = ptm_from_comp_channel(ideal_comp_channel(gate), gate.n_atoms());
        ideal = ideal_ptm(gate);
    } else {
        const PulseRecord pulse = load_pulse_checked(pulse_path);
        if (pulse.n_targets + 1 > 4) {
            throw UnsupportedSize("PTM supports at most four atoms");
        }
        cfg = load_with_overrides(config_path, o);
        ProblemSpec problem = problem_for_pulse(cfg, pulse);
        const GateTarget gate = problem.target;
        const int n = gate.n_atoms();
        std::vector<double> theta(n, 0.0);
        for (int j = 0; j < n; ++j) {
            theta[j] = gate.theta(j);
        }
        const FidelityModel model(problem);
        const auto samples = sample_displacements(
            problem.noise, n, problem.noise.has_motion() ? p.samples : 1,
            derive_seed(cfg.seed, kPtmStream));
        std::vector<PauliTransferMap> maps;
        for (const auto& s : samples) {
            maps.push_back(ptm_from_comp_channel(undo_compensation(model.channel(pulse.phases, s), theta), n));
        }
        real = average_ptm(maps);
        ideal = ideal_ptm(GateTarget{pulse.n_targets, {}, false});
    }

    const auto ranking = rank_error_channels(real, ideal, p.threshold);
    const fs::path dir = cfg.output_dir;
    RunManifest m;
    m.command = p.self_test ? "ptm --self-test" : "ptm";
    m.config_hash = config_path.empty() ? "" : config_hash(cfg);
    m.files = {"ptm_real.csv", "ptm_ideal.csv", "ptm_ranking.csv"};
    if (p.svg) {
        m.files.push_back("ptm_real.svg");
        m.files.push_back("ptm_ideal.svg");
    }
    return with_manifest(dir, m, [&](RunManifest&) {
        write_file_atomic(dir / "ptm_real.csv", text_of([&](std::ostream& s) { write_ptm_csv(s, real); }));
        write_file_atomic(dir / "ptm_ideal.csv", text_of([&](std::ostream& s) { write_ptm_csv(s, ideal); }));
        write_file_atomic(dir / "ptm_ranking.csv",
                          text_of([&](std::ostream& s) { write_ranking_csv(s, ranking); }));
        if (p.svg) {
            write_file_atomic(dir / "ptm_real.svg",
                              text_of([&](std::ostream& s) { write_ptm_svg(s, real, "simulated"); }));
            write_file_atomic(dir / "ptm_ideal.svg",
                              text_of([&](std::ostream& s) { write_ptm_svg(s, ideal, "ideal"); }));
        }
        log << ranking.size() << " deviations above " << p.threshold << '\n';
        for (std::size_t i = 0; i < std::min<std::size_t>(ranking.size(), 10); ++i) {
            const auto& c = ranking[i];
            log << "  " << c.input_label << " -> " << c.output_label << "  "
                << fixed(c.magnitude, 6) << "  " << c.channel_class << '\n';
        }
    });
}

int cmd_validate_config(const std::string& config_path, std::ostream& log) {
    const ExperimentConfig cfg = load_with_overrides(config_path, {});
    cfg.problem().validate();
    cfg.optimizer.validate();
    if (cfg.sweep) {
        cfg.sweep->validate();
    }
    log << "ok " << config_hash(cfg) << '\n';
    return kOk;
}

}  // namespace rydgate::cli
