#include "rydgate/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "rydgate/errors.hpp"
#include "rydgate/parallel.hpp"
#include "rydgate/rng.hpp"

namespace rydgate {

namespace {

bool same(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a));
}

}  // namespace

void SweepSpec::validate() const {
    if (durations_ns.empty() || radii_um.empty()) {
        throw InvalidArgument("sweep grid is empty");
    }
    for (double t : durations_ns) {
        if (!(t > 0.0)) {
            throw InvalidArgument("sweep durations must be positive");
        }
    }
    for (double r : radii_um) {
        if (!(r > 0.0)) {
            throw InvalidArgument("sweep radii must be positive");
        }
    }
}

const SweepCell& SweepResult::at(std::size_t radius_index, std::size_t duration_index) const {
    return cells.at(radius_index * durations_ns.size() + duration_index);
}

std::uint64_t cell_seed(std::uint64_t root, std::size_t cell_index) {
    return derive_seed(root, 0xce11, cell_index);
}

SweepResult run_sweep(const SweepSpec& spec, const ProblemSpec& base, const OptimizerConfig& config,
                      const SweepHooks& hooks) {
    spec.validate();
    config.validate();
    SweepResult result{spec.durations_ns, spec.radii_um, {}};
    const std::size_t n_t = spec.durations_ns.size();
    const std::size_t n_cells = n_t * spec.radii_um.size();
    result.cells.resize(n_cells);

    std::vector<std::size_t> pending;
    for (std::size_t c = 0; c < n_cells; ++c) {
        SweepCell& cell = result.cells[c];
        cell.duration_ns = spec.durations_ns[c % n_t];
        cell.radius_um = spec.radii_um[c / n_t];
        cell.seed = cell_seed(config.seed, c);
        cell.restarts = config.restarts;
        const auto done = std::find_if(hooks.completed.begin(), hooks.completed.end(),
                                       [&](const SweepCell& d) {
                                           return same(d.duration_ns, cell.duration_ns) &&
                                                  same(d.radius_um, cell.radius_um);
                                       });
        if (done != hooks.completed.end()) {
            cell = *done;
        } else {
            pending.push_back(c);
        }
    }

    const auto restarts = static_cast<std::size_t>(config.restarts);
    std::vector<std::optional<TrainingResult>> runs(pending.size() * restarts);
    std::vector<int> remaining(pending.size(), config.restarts);
    std::mutex done_mutex;
    parallel_for(runs.size(), [&](std::size_t job) {
        const std::size_t p = job / restarts;
        const int r = static_cast<int>(job % restarts);
        SweepCell& cell = result.cells[pending[p]];
        ProblemSpec problem = base;
        problem.duration_ns = cell.duration_ns;
        problem.layout = place_atoms(base.target.n_targets, cell.radius_um);
        if (!spec.noise_enabled) {
            problem.noise = NoiseModel::ideal();
        }
        OptimizerConfig c = config;
        c.seed = restart_seed(cell.seed, r);
        try {
            runs[job] = train(c, problem);
        } catch (const NumericalFailure&) {
            runs[job].reset();
        }
        std::lock_guard lock(done_mutex);
        if (--remaining[p] == 0) {
            cell.restart_fidelities.clear();
            for (std::size_t k = 0; k < restarts; ++k) {
                const auto& run = runs[p * restarts + k];
                const double f = run ? run->final_fidelity : 0.0;
                cell.restart_fidelities.push_back(f);
                if (run && (cell.best_params.empty() || f > cell.best_fidelity)) {
                    cell.best_fidelity = f;
                    cell.best_params = run->best.values;
                }
            }
            if (hooks.on_cell_done) {
                hooks.on_cell_done(cell);
            }
        }
    });
    return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
    out << "duration_ns,radius_um,best_fidelity,restarts,seed\n" << std::setprecision(17);
    for (const auto& c : result.cells) {
        out << c.duration_ns << ',' << c.radius_um << ',' << c.best_fidelity << ',' << c.restarts
            << ',' << c.seed << '\n';
    }
}

std::vector<SweepCell> read_sweep_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "duration_ns,radius_um,best_fidelity,restarts,seed") {
        throw InvalidArgument("sweep CSV header missing or malformed");
    }
    std::vector<SweepCell> cells;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string f[5];
        for (auto& cell : f) {
            if (!std::getline(ss, cell, ',')) {
                throw InvalidArgument("sweep CSV row " + std::to_string(row) + " is short");
            }
        }
        try {
            SweepCell c;
            c.duration_ns = std::stod(f[0]);
            c.radius_um = std::stod(f[1]);
            c.best_fidelity = std::stod(f[2]);
            c.restarts = std::stoi(f[3]);
            c.seed = std::stoull(f[4]);
            cells.push_back(c);
        } catch (const std::exception&) {
            throw InvalidArgument("sweep CSV row " + std::to_string(row) + " is not numeric");
        }
    }
    return cells;
}

void write_sweep_plot_csv(std::ostream& out, const SweepResult& result) {
    out << "duration_ns" << std::setprecision(17);
    for (double r : result.radii_um) {
        out << ",R=" << r << "um";
    }
    out << '\n';
    for (std::size_t t = 0; t < result.durations_ns.size(); ++t) {
        out << result.durations_ns[t];
        for (std::size_t r = 0; r < result.radii_um.size(); ++r) {
            out << ',' << result.at(r, t).best_fidelity;
        }
        out << '\n';
    }
}

}  // namespace rydgate
