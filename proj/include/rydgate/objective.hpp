#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rydgate/dynamics.hpp"
#include "rydgate/geometry.hpp"
#include "rydgate/noise_model.hpp"
#include "rydgate/pulse.hpp"

namespace rydgate {

// C(Z^N): (-1)^{c * sum t} on |c, t_1..t_N>, followed by e^{i theta_j} on |1>
// of atom j when compensation is enabled.
struct GateTarget {
    int n_targets = 0;
    std::vector<double> compensation_phases;  // one per atom; empty means all zero
    bool use_compensation = true;

    int n_atoms() const { return n_targets + 1; }
    double theta(int atom) const;
    // Diagonal entry for computational index x (atom 0 = most significant bit).
    cplx diagonal(int x) const;
    void validate() const;
};

// Per-atom states |0>, |1>, |+>, |i> in that order; product index
// s = sum_j s_j 4^(n-1-j). Vectors live in the 2^n computational space.
struct InputStateSet {
    int n_atoms = 0;
    std::vector<Eigen::VectorXcd> states;

    std::size_t size() const { return states.size(); }
};

InputStateSet input_state_set(int n_atoms);

// Embeds a computational-space vector into the 3^n register.
Eigen::VectorXcd embed_computational(const Eigen::VectorXcd& comp, int n_atoms);

// psi_in lives in the 3^n register; throws InvalidArgument if it has support on |r>.
Eigen::VectorXcd ideal_output(const GateTarget& target, const Eigen::VectorXcd& psi_in);

// <psi|rho|psi>. Throws InvalidArgument unless psi is normalized to 1e-9.
double state_fidelity(const DensityMatrix& rho_out, const Eigen::VectorXcd& psi_target);

// W with mean fidelity over the input set = Re sum W .* Lambda, where Lambda is the
// computational channel of CompChannelEngine.
Eigen::MatrixXcd fidelity_weights(const GateTarget& target);

// Average state fidelity and dF/dtheta_j from a computational channel.
double channel_fidelity(const GateTarget& target, const Eigen::MatrixXcd& lambda,
                        std::vector<double>* theta_grad = nullptr);

struct SmoothnessParams {
    double lambda_s = 0.01;
    double lambda_b = 1.0;
    double exponent_b = 2.0;
    double tau = 0.1;  // rad

    void validate() const;
};

double smoothness_term(double jump, const SmoothnessParams& params);
// Sum over adjacent pairs of f(|phi_{i+1} - phi_i|).
double smoothness_cost(std::span<const double> phases, const SmoothnessParams& params);
// Adds d cost / d phi into grad and returns the cost.
double smoothness_gradient(std::span<const double> phases, const SmoothnessParams& params,
                           std::span<double> grad);

struct LossBreakdown {
    double mean_infidelity = 0.0;
    double smoothness_cost = 0.0;
    double total = 0.0;
};

// Everything that fixes the physics of a training problem except the phases.
struct ProblemSpec {
    AtomLayout layout;
    PhysicalConstants constants = PhysicalConstants::defaults();
    NoiseModel noise;
    GateTarget target;
    double duration_ns = 0.0;
    int n_segments = 100;
    double ramp_ns = 10.0;

    PulseSchedule schedule(std::vector<double> phases) const;
    void validate() const;
};

struct BatchEvaluation {
    std::vector<double> fidelities;   // one per displacement sample
    double mean = 0.0;
    double std = 0.0;                 // population standard deviation
    std::vector<double> phase_grad;   // d mean / d phi_k (if requested)
    std::vector<double> theta_grad;   // d mean / d theta_j (if requested)
};

// Batched fidelity for a fixed envelope; samples run in parallel and reduce in
// sample order.
class FidelityModel {
  public:
    explicit FidelityModel(ProblemSpec problem);

    const ProblemSpec& problem() const { return problem_; }
    const Envelope& envelope() const { return envelope_; }

    BatchEvaluation evaluate(std::span<const double> phases, std::span<const double> theta,
                             std::span<const DisplacementSample> samples, bool with_gradient) const;

    // Channel for one displacement sample (used by the PTM and tests).
    Eigen::MatrixXcd channel(std::span<const double> phases, const DisplacementSample& sample) const;

  private:
    ProblemSpec problem_;
    Envelope envelope_;
    KrausChannel step_;
};

// Samples drawn from `seed`; without position noise a single sample is reused.
std::pair<double, double> batch_fidelity(const PulseSchedule& schedule, const AtomLayout& layout,
                                         const NoiseModel& noise, const GateTarget& target,
                                         int n_samples, std::uint64_t seed,
                                         const PhysicalConstants& constants =
                                             PhysicalConstants::defaults());

LossBreakdown total_loss(double mean_fidelity, std::span<const double> phases,
                         const SmoothnessParams& params);

LossBreakdown total_loss(const PulseSchedule& schedule, const AtomLayout& layout,
                         const NoiseModel& noise, const GateTarget& target,
                         const SmoothnessParams& params,
                         std::span<const DisplacementSample> batch,
                         const PhysicalConstants& constants = PhysicalConstants::defaults());

// (1 - F) / N.
double per_cz_error(double fidelity, int n_targets);

}  // namespace rydgate
