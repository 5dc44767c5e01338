#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rydgate/optimizer.hpp"
#include "rydgate/pulse.hpp"

namespace rydgate {

inline constexpr const char* kToolVersion = "0.3.0";

// A trained pulse plus what is needed to replay it.
struct PulseRecord {
    int n_targets = 0;
    double radius_um = 0.0;
    double duration_ns = 0.0;
    int n_segments = 0;
    double ramp_ns = 0.0;
    double omega_max = 0.0;  // rad/us
    std::vector<double> phases;
    std::vector<double> compensation_phases;
    bool compensation_enabled = true;
    std::string config_hash;
    std::uint64_t seed = 0;
    double fidelity = -1.0;  // -1 when unknown

    PulseSchedule schedule() const;
    GateTarget target() const;
    void validate() const;  // throws ConfigError naming the bad field
};

// "# key=value" metadata lines, then segment,t_start_ns,amplitude_2pi_mhz,phase_rad.
void write_pulse_csv(std::ostream& out, const PulseRecord& pulse);
PulseRecord read_pulse_csv(std::istream& in, const std::string& source = "<pulse>");
void write_pulse_json(std::ostream& out, const PulseRecord& pulse);
PulseRecord read_pulse_json(std::istream& in, const std::string& source = "<pulse>");
// Dispatches on the .json / .csv extension.
PulseRecord load_pulse(const std::filesystem::path& path);

void write_training_result_json(std::ostream& out, const TrainingResult& result, int n_targets,
                                const std::string& config_hash);
void write_loss_history_csv(std::ostream& out, const std::vector<HistoryEntry>& history);

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::string started_at;
    std::string finished_at;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> files;  // relative to the output directory
    std::string status = "ok";       // "ok" or "failed"
    std::string message;
};

// Drops inventory entries that do not exist, then writes manifest.json atomically.
void write_manifest(const std::filesystem::path& dir, RunManifest manifest);

// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string utc_timestamp();

}  // namespace rydgate
