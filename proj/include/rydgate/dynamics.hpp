#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rydgate/geometry.hpp"
#include "rydgate/noise_model.hpp"
#include "rydgate/pulse.hpp"

namespace rydgate {

using cplx = std::complex<double>;

// Per-atom levels |0>, |1>, |r>. Atom 0 is the most significant base-3 digit.
enum Level : int { kGround = 0, kQubit = 1, kRydberg = 2 };

struct HilbertSpace {
    int n_atoms = 0;
    int dim = 0;

    explicit HilbertSpace(int atoms);

    int level(int index, int atom) const;
    int index_of(std::span<const int> levels) const;
    // Weight of atom `atom` in the base-3 index.
    int stride(int atom) const;
};

// Largest register the dense routines accept (3^4 = 81 levels).
inline constexpr int kMaxDenseAtoms = 4;

struct DensityMatrix {
    Eigen::MatrixXcd rho;

    static DensityMatrix pure(const Eigen::VectorXcd& psi);
    int dim() const { return static_cast<int>(rho.rows()); }
    double trace() const { return rho.trace().real(); }
    // Hermitian, PSD and trace <= 1 up to `tol`.
    bool is_valid(double tol = 1e-10) const;
};

// Total per-step decay probability p with branch fractions for |r>->|0>,
// |r>->|1> and leakage out of the tracked space.
struct KrausChannel {
    double p = 0.0;
    double to_ground = 0.1354;
    double to_qubit = 0.2504;
    double leak = 0.6142;

    void validate() const;
    static KrausChannel identity() { return {0.0, 0.1354, 0.2504, 0.6142}; }
};

// p = gamma * dt for one segment of length dt_us.
KrausChannel step_channel(const NoiseModel& noise, double dt_us);

// E0 = diag(1, 1, sqrt(1-p)), E1 = sqrt(p b0)|0><r|, E2 = sqrt(p b1)|1><r|.
std::array<Eigen::Matrix3d, 3> kraus_operators(const KrausChannel& channel);

// H = sum_j (Omega/2)(e^{i phi}|r><1|_j + h.c.) + sum_{j<k} V_jk n_j n_k.
Eigen::MatrixXcd build_segment_hamiltonian(const InteractionMatrix& interactions, double amplitude,
                                           double phase);

// exp(-i dt H) via Hermitian eigendecomposition. Throws InvalidArgument if H is
// not Hermitian to 1e-10 (relative) or dt <= 0.
Eigen::MatrixXcd segment_propagator(const Eigen::MatrixXcd& hamiltonian, double dt_us);

// Independent per-atom channels; population p*b_leak of each |r> is dropped.
DensityMatrix apply_kraus(const DensityMatrix& rho, const KrausChannel& channel);

// Alternating U_k then K for every segment.
DensityMatrix evolve(const DensityMatrix& initial, const PulseSchedule& schedule,
                     const InteractionMatrix& interactions, const KrausChannel& channel);

// Liouville matrix acting on column-stacked vec(rho): vec(rho)[i + j*dim] = rho(i, j).
struct Superoperator {
    int dim = 0;
    Eigen::MatrixXcd matrix;

    DensityMatrix apply(const DensityMatrix& rho) const;
};

// Full-gate superoperator; throws UnsupportedSize beyond kMaxDenseAtoms.
Superoperator evolve_channel(const PulseSchedule& schedule, const InteractionMatrix& interactions,
                             const KrausChannel& channel);

}  // namespace rydgate
