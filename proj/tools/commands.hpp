#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace rydgate::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kNumericalError = 3 };

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    bool no_noise = false;
    bool resume = false;
};

int cmd_optimize(const std::string& config_path, const Overrides& o, std::ostream& log);
int cmd_sweep(const std::string& config_path, const Overrides& o, std::ostream& log);

struct EvaluateOptions {
    std::optional<int> samples;
};
int cmd_evaluate(const std::string& pulse_path, const std::string& config_path, const Overrides& o,
                 const EvaluateOptions& e, std::ostream& log);

struct PtmOptions {
    bool self_test = false;
    int n_targets = 2;  // self-test size
    int samples = 16;   // displacement samples averaged when position noise is on
    double threshold = 1e-3;
    bool svg = false;
};
int cmd_ptm(const std::string& pulse_path, const std::string& config_path, const Overrides& o,
            const PtmOptions& p, std::ostream& log);

int cmd_validate_config(const std::string& config_path, std::ostream& log);

// Maps library exceptions to exit codes and prints one diagnostic line.
template <typename F>
int guarded(std::ostream& err, F&& body);

}  // namespace rydgate::cli

#include "commands_guard.hpp"
