#include "rydgate/objective.hpp"

#include <array>
#include <cmath>
#include <string>

#include "rydgate/block_engine.hpp"
#include "rydgate/errors.hpp"
#include "rydgate/parallel.hpp"

namespace rydgate {

namespace {

// Amplitudes of |0>, |+>, ... on |0> and |1>.
std::array<std::array<cplx, 2>, 4> single_atom_inputs() {
    const double h = 1.0 / std::sqrt(2.0);
    return {{{cplx(1, 0), cplx(0, 0)},
             {cplx(0, 0), cplx(1, 0)},
             {cplx(h, 0), cplx(h, 0)},
             {cplx(h, 0), cplx(0, h)}}};
}

int bit_of(int x, int atom, int n_atoms) {
    return (x >> (n_atoms - 1 - atom)) & 1;
}

}  // namespace

double GateTarget::theta(int atom) const {
    if (!use_compensation || compensation_phases.empty()) {
        return 0.0;
    }
    return compensation_phases.at(atom);
}

cplx GateTarget::diagonal(int x) const {
    const int n = n_atoms();
    const int control = bit_of(x, 0, n);
    int targets = 0;
    double phase = theta(0) * control;
    for (int j = 1; j < n; ++j) {
        targets += bit_of(x, j, n);
        phase += theta(j) * bit_of(x, j, n);
    }
    const double sign = (control * targets) % 2 ? -1.0 : 1.0;
    return sign * std::polar(1.0, phase);
}

void GateTarget::validate() const {
    if (n_targets < 1) {
        throw InvalidArgument("gate needs at least one target");
    }
    if (!compensation_phases.empty() &&
        static_cast<int>(compensation_phases.size()) != n_atoms()) {
        throw InvalidArgument("expected " + std::to_string(n_atoms()) + " compensation phases, got " +
                              std::to_string(compensation_phases.size()));
    }
    for (double t : compensation_phases) {
        if (!std::isfinite(t)) {
            throw InvalidArgument("compensation phases must be finite");
        }
    }
}

InputStateSet input_state_set(int n_atoms) {
    if (n_atoms < 1 || n_atoms > 8) {
        throw InvalidArgument("input set needs 1..8 atoms");
    }
    const auto single = single_atom_inputs();
    const int d = 1 << n_atoms;
    int count = 1;
    for (int j = 0; j < n_atoms; ++j) {
        count *= 4;
    }
    InputStateSet set{n_atoms, {}};
    set.states.reserve(count);
    for (int s = 0; s < count; ++s) {
        Eigen::VectorXcd psi(d);
        for (int x = 0; x < d; ++x) {
            cplx amp = 1.0;
            int rest = s;
            for (int j = n_atoms - 1; j >= 0; --j) {
                amp *= single[rest % 4][bit_of(x, j, n_atoms)];
                rest /= 4;
            }
            psi(x) = amp;
        }
        set.states.push_back(std::move(psi));
    }
    return set;
}

Eigen::VectorXcd embed_computational(const Eigen::VectorXcd& comp, int n_atoms) {
    const HilbertSpace space(n_atoms);
    if (comp.size() != (1 << n_atoms)) {
        throw InvalidArgument("computational vector has wrong dimension");
    }
    Eigen::VectorXcd full = Eigen::VectorXcd::Zero(space.dim);
    for (int x = 0; x < comp.size(); ++x) {
        int index = 0;
        for (int j = 0; j < n_atoms; ++j) {
            index = index * 3 + bit_of(x, j, n_atoms);
        }
        full(index) = comp(x);
    }
    return full;
}

Eigen::VectorXcd ideal_output(const GateTarget& target, const Eigen::VectorXcd& psi_in) {
    target.validate();
    const int n = target.n_atoms();
    const HilbertSpace space(n);
    if (psi_in.size() != space.dim) {
        throw InvalidArgument("input state dimension " + std::to_string(psi_in.size()) +
                              " does not match 3^" + std::to_string(n));
    }
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(space.dim);
    for (int i = 0; i < space.dim; ++i) {
        if (psi_in(i) == cplx{}) {
            continue;
        }
        int x = 0;
        for (int j = 0; j < n; ++j) {
            const int level = space.level(i, j);
            if (level == kRydberg) {
                throw InvalidArgument("input state has support outside the computational subspace");
            }
            x = (x << 1) | level;
        }
        out(i) = target.diagonal(x) * psi_in(i);
    }
    return out;
}

double state_fidelity(const DensityMatrix& rho_out, const Eigen::VectorXcd& psi_target) {
    if (psi_target.size() != rho_out.dim()) {
        throw InvalidArgument("target state and density matrix dimensions differ");
    }
    if (std::abs(psi_target.squaredNorm() - 1.0) > 1e-9) {
        throw InvalidArgument("target state is not normalized");
    }
    const double f = psi_target.dot(rho_out.rho * psi_target).real();
    return std::clamp(f, 0.0, 1.0);
}

Eigen::MatrixXcd fidelity_weights(const GateTarget& target) {
    target.validate();
    const int n = target.n_atoms();
    const int d = 1 << n;
    const auto single = single_atom_inputs();
    // tau[a][b][c][e] = 1/4 sum_s c_s(a) conj(c_s(b)) conj(c_s(c)) c_s(e)
    std::array<cplx, 16> tau{};
    for (int code = 0; code < 16; ++code) {
        const int a = (code >> 3) & 1, b = (code >> 2) & 1, c = (code >> 1) & 1, e = code & 1;
        cplx acc{};
        for (const auto& s : single) {
            acc += s[a] * std::conj(s[b]) * std::conj(s[c]) * s[e];
        }
        tau[code] = 0.25 * acc;
    }
    std::vector<cplx> g(d);
    for (int x = 0; x < d; ++x) {
        g[x] = target.diagonal(x);
    }
    Eigen::MatrixXcd w(d * d, d * d);
    for (int xo = 0; xo < d; ++xo) {
        for (int yo = 0; yo < d; ++yo) {
            const cplx outer = std::conj(g[xo]) * g[yo];
            for (int x = 0; x < d; ++x) {
                for (int y = 0; y < d; ++y) {
                    cplx prod = outer;
                    for (int j = 0; j < n && prod != cplx{}; ++j) {
                        const int code = bit_of(x, j, n) << 3 | bit_of(y, j, n) << 2 |
                                         bit_of(xo, j, n) << 1 | bit_of(yo, j, n);
                        prod *= tau[code];
                    }
                    w(xo * d + yo, x * d + y) = prod;
                }
            }
        }
    }
    return w;
}

double channel_fidelity(const GateTarget& target, const Eigen::MatrixXcd& lambda,
                        std::vector<double>* theta_grad) {
    const Eigen::MatrixXcd w = fidelity_weights(target);
    if (lambda.rows() != w.rows() || lambda.cols() != w.cols()) {
        throw InvalidArgument("channel dimension does not match the gate");
    }
    const Eigen::MatrixXcd prod = w.cwiseProduct(lambda);
    if (theta_grad) {
        const int n = target.n_atoms();
        const int d = 1 << n;
        theta_grad->assign(n, 0.0);
        if (target.use_compensation) {
            for (int xo = 0; xo < d; ++xo) {
                for (int yo = 0; yo < d; ++yo) {
                    const cplx rowsum = prod.row(xo * d + yo).sum();
                    for (int j = 0; j < n; ++j) {
                        const int diff = bit_of(yo, j, n) - bit_of(xo, j, n);
                        if (diff != 0) {
                            // Re(i * diff * z) = -diff * Im z
                            (*theta_grad)[j] -= diff * rowsum.imag();
                        }
                    }
                }
            }
        }
    }
    return prod.sum().real();
}

void SmoothnessParams::validate() const {
    if (!(lambda_s >= 0.0 && lambda_b >= 0.0 && exponent_b >= 0.0)) {
        throw InvalidArgument("smoothness coefficients must be non-negative");
    }
    if (!(tau > 0.0)) {
        throw InvalidArgument("smoothness threshold tau must be positive");
    }
}

double smoothness_term(double jump, const SmoothnessParams& p) {
    const double g = std::abs(jump);
    if (g <= p.tau) {
        return p.lambda_s * g * g;
    }
    return p.lambda_s * p.tau * p.tau + p.lambda_b * std::expm1(p.exponent_b * (g - p.tau));
}

double smoothness_cost(std::span<const double> phases, const SmoothnessParams& params) {
    params.validate();
    double cost = 0.0;
    for (std::size_t i = 0; i + 1 < phases.size(); ++i) {
        cost += smoothness_term(phases[i + 1] - phases[i], params);
    }
    return cost;
}

double smoothness_gradient(std::span<const double> phases, const SmoothnessParams& p,
                           std::span<double> grad) {
    p.validate();
    double cost = 0.0;
    for (std::size_t i = 0; i + 1 < phases.size(); ++i) {
        const double delta = phases[i + 1] - phases[i];
        const double g = std::abs(delta);
        cost += smoothness_term(delta, p);
        double slope;
        if (g <= p.tau) {
            slope = 2.0 * p.lambda_s * g;
        } else {
            slope = p.lambda_b * p.exponent_b * std::exp(p.exponent_b * (g - p.tau));
        }
        const double d = delta >= 0.0 ? slope : -slope;
        grad[i + 1] += d;
        grad[i] -= d;
    }
    return cost;
}

PulseSchedule ProblemSpec::schedule(std::vector<double> phases) const {
    return make_schedule(duration_ns, n_segments, constants.omega_max, ramp_ns, std::move(phases));
}

void ProblemSpec::validate() const {
    constants.validate();
    noise.validate();
    target.validate();
    if (layout.n_atoms() != target.n_atoms()) {
        throw InvalidArgument("layout has " + std::to_string(layout.n_atoms()) +
                              " atoms but the gate needs " + std::to_string(target.n_atoms()));
    }
    if (layout.n_atoms() > engine::kMaxAtoms) {
        throw UnsupportedSize("at most " + std::to_string(engine::kMaxAtoms) + " atoms supported");
    }
    build_envelope(duration_ns, n_segments, constants.omega_max, ramp_ns);
}

FidelityModel::FidelityModel(ProblemSpec problem) : problem_(std::move(problem)) {
    problem_.validate();
    envelope_ = build_envelope(problem_.duration_ns, problem_.n_segments,
                               problem_.constants.omega_max, problem_.ramp_ns);
    step_ = step_channel(problem_.noise, problem_.duration_ns * 1e-3 / problem_.n_segments);
}

Eigen::MatrixXcd FidelityModel::channel(std::span<const double> phases,
                                        const DisplacementSample& sample) const {
    const int n = problem_.layout.n_atoms();
    engine::CompChannelEngine eng(n, step_);
    const auto positions = displaced_positions(problem_.layout, sample);
    eng.set_hamiltonian(interaction_matrix(positions, problem_.constants), envelope_.amplitude,
                        problem_.duration_ns * 1e-3 / problem_.n_segments);
    return eng.channel(phases);
}

BatchEvaluation FidelityModel::evaluate(std::span<const double> phases,
                                        std::span<const double> theta,
                                        std::span<const DisplacementSample> samples,
                                        bool with_gradient) const {
    const int n_seg = problem_.n_segments;
    const int n = problem_.layout.n_atoms();
    if (static_cast<int>(phases.size()) != n_seg) {
        throw InvalidArgument("expected " + std::to_string(n_seg) + " phases, got " +
                              std::to_string(phases.size()));
    }
    if (!theta.empty() && static_cast<int>(theta.size()) != n) {
        throw InvalidArgument("expected " + std::to_string(n) + " compensation phases");
    }
    if (samples.empty()) {
        throw InvalidArgument("fidelity batch is empty");
    }
    for (double p : phases) {
        if (!std::isfinite(p)) {
            throw NumericalFailure("non-finite phase parameter");
        }
    }
    GateTarget target = problem_.target;
    target.compensation_phases.assign(theta.begin(), theta.end());
    const Eigen::MatrixXcd weights = fidelity_weights(target);
    const double dt = problem_.duration_ns * 1e-3 / problem_.n_segments;

    // Without position noise every sample is the nominal geometry.
    const bool distinct = problem_.noise.has_motion();
    const std::size_t jobs = distinct ? samples.size() : 1;

    std::vector<double> fid(jobs);
    std::vector<std::vector<double>> pgrad(with_gradient ? jobs : 0);
    std::vector<std::vector<double>> tgrad(with_gradient ? jobs : 0);
    parallel_for(jobs, [&](std::size_t m) {
        engine::CompChannelEngine eng(n, step_);
        const auto positions = displaced_positions(problem_.layout, samples[m]);
        eng.set_hamiltonian(interaction_matrix(positions, problem_.constants), envelope_.amplitude,
                            dt);
        if (with_gradient) {
            pgrad[m].assign(n_seg, 0.0);
            Eigen::MatrixXcd lambda;
            fid[m] = eng.gradient(phases, weights, pgrad[m], &lambda);
            channel_fidelity(target, lambda, &tgrad[m]);
        } else {
            fid[m] = (weights.cwiseProduct(eng.channel(phases))).sum().real();
        }
        if (!std::isfinite(fid[m])) {
            throw NumericalFailure("non-finite fidelity for displacement sample " +
                                   std::to_string(m));
        }
    });

    BatchEvaluation out;
    out.fidelities.resize(samples.size());
    for (std::size_t m = 0; m < samples.size(); ++m) {
        out.fidelities[m] = std::clamp(fid[distinct ? m : 0], 0.0, 1.0);
    }
    double sum = 0.0;
    for (double f : out.fidelities) {
        sum += f;
    }
    out.mean = sum / static_cast<double>(samples.size());
    double var = 0.0;
    for (double f : out.fidelities) {
        var += (f - out.mean) * (f - out.mean);
    }
    out.std = std::sqrt(var / static_cast<double>(samples.size()));

    if (with_gradient) {
        out.phase_grad.assign(n_seg, 0.0);
        out.theta_grad.assign(n, 0.0);
        for (std::size_t m = 0; m < jobs; ++m) {
            for (int k = 0; k < n_seg; ++k) {
                out.phase_grad[k] += pgrad[m][k];
            }
            for (int j = 0; j < n; ++j) {
                out.theta_grad[j] += tgrad[m][j];
            }
        }
        const double scale = 1.0 / static_cast<double>(jobs);
        for (double& g : out.phase_grad) {
            g *= scale;
        }
        for (double& g : out.theta_grad) {
            g *= scale;
        }
    }
    return out;
}

std::pair<double, double> batch_fidelity(const PulseSchedule& schedule, const AtomLayout& layout,
                                         const NoiseModel& noise, const GateTarget& target,
                                         int n_samples, std::uint64_t seed,
                                         const PhysicalConstants& constants) {
    if (n_samples < 1) {
        throw InvalidArgument("batch_fidelity needs at least one sample");
    }
    schedule.validate();
    ProblemSpec problem;
    problem.layout = layout;
    problem.constants = constants;
    problem.constants.omega_max = schedule.omega_max;
    problem.noise = noise;
    problem.target = target;
    problem.duration_ns = schedule.duration_ns;
    problem.n_segments = schedule.n_segments;
    problem.ramp_ns = schedule.ramp_ns;
    const FidelityModel model(problem);
    const auto samples = sample_displacements(noise, layout.n_atoms(), n_samples, seed);
    std::vector<double> theta = target.compensation_phases;
    if (!target.use_compensation) {
        theta.clear();
    }
    const auto eval = model.evaluate(schedule.phases, theta, samples, false);
    return {eval.mean, eval.std};
}

LossBreakdown total_loss(double mean_fidelity, std::span<const double> phases,
                         const SmoothnessParams& params) {
    LossBreakdown loss;
    loss.mean_infidelity = std::max(0.0, 1.0 - mean_fidelity);
    loss.smoothness_cost = smoothness_cost(phases, params);
    loss.total = loss.mean_infidelity + loss.smoothness_cost;
    return loss;
}

LossBreakdown total_loss(const PulseSchedule& schedule, const AtomLayout& layout,
                         const NoiseModel& noise, const GateTarget& target,
                         const SmoothnessParams& params,
                         std::span<const DisplacementSample> batch,
                         const PhysicalConstants& constants) {
    schedule.validate();
    ProblemSpec problem;
    problem.layout = layout;
    problem.constants = constants;
    problem.constants.omega_max = schedule.omega_max;
    problem.noise = noise;
    problem.target = target;
    problem.duration_ns = schedule.duration_ns;
    problem.n_segments = schedule.n_segments;
    problem.ramp_ns = schedule.ramp_ns;
    const FidelityModel model(problem);
    std::vector<double> theta = target.use_compensation ? target.compensation_phases
                                                        : std::vector<double>{};
    const auto eval = model.evaluate(schedule.phases, theta, batch, false);
    return total_loss(eval.mean, schedule.phases, params);
}

double per_cz_error(double fidelity, int n_targets) {
    if (!(fidelity >= 0.0 && fidelity <= 1.0)) {
        throw InvalidArgument("fidelity must lie in [0, 1]");
    }
    if (n_targets < 1) {
        throw InvalidArgument("n_targets must be at least 1");
    }
    return (1.0 - fidelity) / n_targets;
}

}  // namespace rydgate
