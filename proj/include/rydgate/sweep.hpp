#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "rydgate/optimizer.hpp"

namespace rydgate {

struct SweepSpec {
    std::vector<double> durations_ns;
    std::vector<double> radii_um;
    bool noise_enabled = false;  // ideal conditions unless set

    void validate() const;
};

struct SweepCell {
    double duration_ns = 0.0;
    double radius_um = 0.0;
    double best_fidelity = 0.0;
    int restarts = 0;
    std::uint64_t seed = 0;
    std::vector<double> restart_fidelities;  // empty for cells loaded from CSV
    std::vector<double> best_params;
};

// Cells ordered radius-major: index = radius_index * durations + duration_index.
struct SweepResult {
    std::vector<double> durations_ns;
    std::vector<double> radii_um;
    std::vector<SweepCell> cells;

    const SweepCell& at(std::size_t radius_index, std::size_t duration_index) const;
};

struct SweepHooks {
    std::vector<SweepCell> completed;  // cells reused verbatim (resume)
    std::function<void(const SweepCell&)> on_cell_done;
};

std::uint64_t cell_seed(std::uint64_t root, std::size_t cell_index);

// Runs config.restarts trainings per cell; the jobs of all cells share one pool.
SweepResult run_sweep(const SweepSpec& spec, const ProblemSpec& base, const OptimizerConfig& config,
                      const SweepHooks& hooks = {});

void write_sweep_csv(std::ostream& out, const SweepResult& result);
std::vector<SweepCell> read_sweep_csv(std::istream& in);
// One column per radius, one row per duration.
void write_sweep_plot_csv(std::ostream& out, const SweepResult& result);

}  // namespace rydgate
