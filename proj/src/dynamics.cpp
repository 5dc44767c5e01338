#include "rydgate/dynamics.hpp"

#include <cmath>
#include <string>

#include "rydgate/block_engine.hpp"
#include "rydgate/errors.hpp"

namespace rydgate {

HilbertSpace::HilbertSpace(int atoms) : n_atoms(atoms), dim(1) {
    if (atoms < 1 || atoms > 12) {
        throw InvalidArgument("atom count out of range: " + std::to_string(atoms));
    }
    for (int i = 0; i < atoms; ++i) {
        dim *= 3;
    }
}

int HilbertSpace::stride(int atom) const {
    int s = 1;
    for (int i = atom + 1; i < n_atoms; ++i) {
        s *= 3;
    }
    return s;
}

int HilbertSpace::level(int index, int atom) const {
    return (index / stride(atom)) % 3;
}

int HilbertSpace::index_of(std::span<const int> levels) const {
    int index = 0;
    for (int l : levels) {
        index = index * 3 + l;
    }
    return index;
}

DensityMatrix DensityMatrix::pure(const Eigen::VectorXcd& psi) {
    return {psi * psi.adjoint()};
}

bool DensityMatrix::is_valid(double tol) const {
    if (rho.rows() != rho.cols()) {
        return false;
    }
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) {
        return false;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho, Eigen::EigenvaluesOnly);
    if (solver.eigenvalues().minCoeff() < -tol) {
        return false;
    }
    return trace() <= 1.0 + tol;
}

void KrausChannel::validate() const {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument("Kraus decay probability must lie in [0, 1]");
    }
    if (!(to_ground >= 0.0 && to_qubit >= 0.0 && leak >= 0.0)) {
        throw InvalidArgument("Kraus branch fractions must be non-negative");
    }
    if (std::abs(to_ground + to_qubit + leak - 1.0) > 1e-9) {
        throw InvalidArgument("Kraus branch fractions must sum to 1");
    }
}

KrausChannel step_channel(const NoiseModel& noise, double dt_us) {
    noise.validate();
    KrausChannel k{noise.decay_rate_per_us * dt_us, noise.branch_to_0, noise.branch_to_1,
                   noise.branch_leak};
    k.validate();
    return k;
}

std::array<Eigen::Matrix3d, 3> kraus_operators(const KrausChannel& channel) {
    channel.validate();
    std::array<Eigen::Matrix3d, 3> e;
    for (auto& m : e) {
        m.setZero();
    }
    e[0](0, 0) = 1.0;
    e[0](1, 1) = 1.0;
    e[0](2, 2) = std::sqrt(1.0 - channel.p);
    e[1](0, 2) = std::sqrt(channel.p * channel.to_ground);
    e[2](1, 2) = std::sqrt(channel.p * channel.to_qubit);
    return e;
}

Eigen::MatrixXcd build_segment_hamiltonian(const InteractionMatrix& interactions, double amplitude,
                                           double phase) {
    const int n = interactions.n_atoms();
    if (n < 1 || interactions.v.cols() != n) {
        throw InvalidArgument("interaction matrix must be square and non-empty");
    }
    if (n > kMaxDenseAtoms) {
        throw UnsupportedSize("dense Hamiltonian limited to " + std::to_string(kMaxDenseAtoms) +
                              " atoms");
    }
    const HilbertSpace space(n);
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(space.dim, space.dim);
    const cplx raise = 0.5 * amplitude * std::polar(1.0, phase);
    for (int x = 0; x < space.dim; ++x) {
        double diag = 0.0;
        for (int j = 0; j < n; ++j) {
            const int lj = space.level(x, j);
            if (lj == kQubit) {
                const int y = x + space.stride(j);  // same state with atom j in |r>
                h(y, x) += raise;
                h(x, y) += std::conj(raise);
            }
            if (lj == kRydberg) {
                for (int k = j + 1; k < n; ++k) {
                    if (space.level(x, k) == kRydberg) {
                        diag += interactions(j, k);
                    }
                }
            }
        }
        h(x, x) += diag;
    }
    return h;
}

Eigen::MatrixXcd segment_propagator(const Eigen::MatrixXcd& hamiltonian, double dt_us) {
    if (!(dt_us > 0.0)) {
        throw InvalidArgument("segment duration must be positive");
    }
    if (hamiltonian.rows() != hamiltonian.cols()) {
        throw InvalidArgument("Hamiltonian must be square");
    }
    const double scale = std::max(1.0, hamiltonian.cwiseAbs().maxCoeff());
    if ((hamiltonian - hamiltonian.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw InvalidArgument("Hamiltonian is not Hermitian");
    }
    const Eigen::MatrixXcd herm = 0.5 * (hamiltonian + hamiltonian.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(herm);
    if (solver.info() != Eigen::Success) {
        throw NumericalFailure("eigendecomposition failed");
    }
    const Eigen::VectorXd& lambda = solver.eigenvalues();
    Eigen::VectorXcd phases(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        phases(i) = std::polar(1.0, -dt_us * lambda(i));
    }
    const Eigen::MatrixXcd& q = solver.eigenvectors();
    return q * phases.asDiagonal() * q.adjoint();
}

namespace {

// I (x) ... (x) op (x) ... (x) I with op on `atom`.
Eigen::MatrixXd embed_single_atom(const Eigen::Matrix3d& op, int atom, int n_atoms) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(1, 1);
    for (int j = 0; j < n_atoms; ++j) {
        const Eigen::Matrix3d factor = j == atom ? op : Eigen::Matrix3d::Identity();
        Eigen::MatrixXd next(out.rows() * 3, out.cols() * 3);
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            for (Eigen::Index c = 0; c < out.cols(); ++c) {
                next.block<3, 3>(3 * r, 3 * c) = out(r, c) * factor;
            }
        }
        out = std::move(next);
    }
    return out;
}

int atoms_for_dim(Eigen::Index dim) {
    int n = 0;
    Eigen::Index d = 1;
    while (d < dim) {
        d *= 3;
        ++n;
    }
    if (d != dim || n < 1) {
        throw InvalidArgument("state dimension " + std::to_string(dim) + " is not a power of 3");
    }
    return n;
}

}  // namespace

DensityMatrix apply_kraus(const DensityMatrix& rho, const KrausChannel& channel) {
    const auto ops = kraus_operators(channel);
    const int n = atoms_for_dim(rho.rho.rows());
    if (n > kMaxDenseAtoms) {
        throw UnsupportedSize("dense Kraus application limited to 4 atoms");
    }
    Eigen::MatrixXcd current = rho.rho;
    for (int atom = 0; atom < n; ++atom) {
        Eigen::MatrixXcd next = Eigen::MatrixXcd::Zero(current.rows(), current.cols());
        for (const auto& e : ops) {
            const Eigen::MatrixXcd full = embed_single_atom(e, atom, n).cast<cplx>();
            next.noalias() += full * current * full.adjoint();
        }
        current = std::move(next);
    }
    return {current};
}

DensityMatrix evolve(const DensityMatrix& initial, const PulseSchedule& schedule,
                     const InteractionMatrix& interactions, const KrausChannel& channel) {
    schedule.validate();
    channel.validate();
    const HilbertSpace space(interactions.n_atoms());
    if (initial.dim() != space.dim) {
        throw InvalidArgument("initial state dimension does not match the register");
    }
    const Envelope env = envelope_of(schedule);
    const double dt = schedule.segment_us();
    DensityMatrix rho = initial;
    for (int k = 0; k < schedule.n_segments; ++k) {
        const auto drive = segment_drive(schedule, env, k);
        const Eigen::MatrixXcd u =
            segment_propagator(build_segment_hamiltonian(interactions, drive.amplitude, drive.phase), dt);
        rho.rho = u * rho.rho * u.adjoint();
        if (channel.p > 0.0) {
            rho = apply_kraus(rho, channel);
        }
    }
    return rho;
}

DensityMatrix Superoperator::apply(const DensityMatrix& rho) const {
    if (rho.dim() != dim) {
        throw InvalidArgument("superoperator dimension mismatch");
    }
    const Eigen::Map<const Eigen::VectorXcd> vec(rho.rho.data(), rho.rho.size());
    const Eigen::VectorXcd out = matrix * vec;
    return {Eigen::Map<const Eigen::MatrixXcd>(out.data(), dim, dim)};
}

Superoperator evolve_channel(const PulseSchedule& schedule, const InteractionMatrix& interactions,
                             const KrausChannel& channel) {
    const int n = interactions.n_atoms();
    if (n > kMaxDenseAtoms) {
        throw UnsupportedSize("evolve_channel supports at most " + std::to_string(kMaxDenseAtoms) +
                              " atoms");
    }
    schedule.validate();
    channel.validate();
    engine::ChainEvolver evolver(engine::all_matrix_unit_origins(n), n, channel);
    const Envelope env = envelope_of(schedule);
    evolver.set_hamiltonian(interactions, env.amplitude, schedule.segment_us());
    return {HilbertSpace(n).dim, evolver.superoperator(schedule.phases)};
}

}  // namespace rydgate
