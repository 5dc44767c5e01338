#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rydgate/geometry.hpp"
#include "rydgate/noise_model.hpp"
#include "rydgate/objective.hpp"
#include "rydgate/optimizer.hpp"
#include "rydgate/sweep.hpp"

namespace rydgate {

// JSON experiment description. Every physical key carries its unit in the name;
// unknown keys are rejected. Missing keys take the table defaults.
struct ExperimentConfig {
    int n_targets = 2;
    bool compensation_phases = true;

    double radius_um = 3.5;
    std::vector<Vec3> positions_um;  // overrides the circle when non-empty
    PhysicalConstants constants = PhysicalConstants::defaults();

    double duration_ns = 575.0;
    int n_segments = 100;
    double ramp_ns = 10.0;

    bool noise_enabled = true;
    NoiseModel noise = NoiseModel::defaults();

    OptimizerConfig optimizer;
    std::optional<SweepSpec> sweep;

    std::uint64_t seed = 0;
    std::string output_dir = "results";

    AtomLayout layout() const;
    ProblemSpec problem() const;
};

// `source` names the text in error messages ("file:line: key: message").
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON of the fully resolved config (defaults filled in).
std::string config_to_json(const ExperimentConfig& config);

// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace rydgate
