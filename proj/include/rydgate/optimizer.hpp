#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rydgate/objective.hpp"

namespace rydgate {

// Segment phases followed by one compensation phase per atom.
struct ParamVector {
    int n_segments = 0;
    int n_atoms = 0;
    std::vector<double> values;

    ParamVector() = default;
    ParamVector(int segments, int atoms);

    std::span<double> phases() { return {values.data(), static_cast<std::size_t>(n_segments)}; }
    std::span<const double> phases() const {
        return {values.data(), static_cast<std::size_t>(n_segments)};
    }
    std::span<double> theta() {
        return {values.data() + n_segments, static_cast<std::size_t>(n_atoms)};
    }
    std::span<const double> theta() const {
        return {values.data() + n_segments, static_cast<std::size_t>(n_atoms)};
    }
    bool finite() const;
};

struct OptimizerConfig {
    double learning_rate = 0.01;
    double final_learning_rate = 0.001;  // cosine decay target
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int iterations = 2000;
    int batch_size = 16;
    double lambda_s_initial = 0.01;
    double lambda_b = 1.0;
    double exponent_b = 2.0;
    double tau = 0.1;  // rad
    int restarts = 50;
    int patience = 200;          // iterations without loss improvement, 0 disables
    int eval_samples = 10000;    // final evaluation
    int validation_samples = 64; // periodic model selection
    int eval_every = 25;
    double max_phase_jump = 1.0;  // rad, preferred bound on accepted pulses
    // Initial phases: iid uniform in [-pi, pi) per segment, or a random
    // low-frequency cosine series (offset uniform in [-pi, pi)).
    enum class Init { kUniform, kSmooth } init = Init::kUniform;
    int smooth_modes = 4;
    // Noisy problems only: train on the noiseless problem first, then refine
    // the result. Refinement is an optional motion-only stage (pure states,
    // large batches) followed by finetune_iterations under the full noise
    // model with batch_size samples. Both refinement stages run without the
    // small-jump term and without early stopping, at refine_tau (0 = tau).
    bool ideal_pretrain = false;
    int finetune_iterations = 300;
    double finetune_learning_rate = 0.003;
    int robust_iterations = 0;
    int robust_batch_size = 128;
    double robust_learning_rate = 0.01;
    double refine_tau = 0.0;  // rad
    // multi_restart with ideal_pretrain: every restart is pretrained, scored
    // under noise on screen_samples shared samples, and only the best
    // refine_candidates are refined.
    int screen_samples = 256;
    int refine_candidates = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

const char* init_name(OptimizerConfig::Init init);

double learning_rate_at(int iteration, const OptimizerConfig& config);

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const OptimizerConfig& config, int iteration);

// Linear decay to 0 at half of the run.
double anneal_lambda_s(int iteration, int total_iterations, double lambda_s_initial);

struct LossContext {
    const FidelityModel* model = nullptr;
    std::span<const DisplacementSample> batch;
    SmoothnessParams smoothness;
};

struct LossGradient {
    LossBreakdown loss;
    double mean_fidelity = 0.0;
    std::vector<double> grad;  // same layout as ParamVector::values
};

// Throws NumericalFailure on a non-finite loss or gradient.
LossGradient loss_gradient(const ParamVector& params, const LossContext& context);
double loss_value(const ParamVector& params, const LossContext& context);

// Central differences of f at x with the given step.
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step);

double max_phase_jump(std::span<const double> phases);

struct HistoryEntry {
    int iteration = 0;
    double total = 0.0;
    double mean_infidelity = 0.0;
    double smoothness = 0.0;
    double lambda_s = 0.0;
    double learning_rate = 0.0;
    double validation_fidelity = -1.0;  // -1 when not evaluated this iteration
};

struct TrainingResult {
    ParamVector best;
    double final_fidelity = 0.0;
    double final_std = 0.0;
    double validation_fidelity = 0.0;
    int best_iteration = -1;  // -1 = initialization
    int iterations_run = 0;
    bool stopped_early = false;
    double max_phase_jump = 0.0;
    std::vector<HistoryEntry> history;
    std::uint64_t seed = 0;
    OptimizerConfig config;
    // "train" for a single-stage run, "refined" after pretrain + refinement,
    // "screened" for a pretrained restart that was only scored under noise
    // (final_fidelity is then the screening mean).
    std::string stage = "train";
};

struct TrainHooks {
    std::string checkpoint_path;  // empty disables checkpointing
    int checkpoint_every = 100;
    std::vector<double> initial_phases;  // warm start (phases, optionally + theta); empty = random
    std::function<void(const HistoryEntry&)> on_iteration;
};

TrainingResult train(const OptimizerConfig& config, const ProblemSpec& problem,
                     const TrainHooks& hooks = {});

struct MultiRestartResult {
    std::size_t best_index = 0;
    std::vector<TrainingResult> results;
    std::vector<std::string> failures;

    const TrainingResult& best() const { return results.at(best_index); }
};

// Restart r trains with seed derive_seed(config.seed, r). Throws NumericalFailure
// if every restart fails.
MultiRestartResult multi_restart(const OptimizerConfig& config, const ProblemSpec& problem,
                                 const TrainHooks& hooks = {});

std::uint64_t restart_seed(std::uint64_t root, int restart);

}  // namespace rydgate
