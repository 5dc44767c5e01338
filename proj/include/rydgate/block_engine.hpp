#pragma once

// Block-structured evolution on the {|0>,|1>,|r>}^n register.
//
// The drive only couples |1> <-> |r>, so the set of atoms that are *not* in |0>
// (the active set) is conserved by every segment propagator. Each active set A
// spans a 2^|A| block (local bit = 1 means |r>), and density-matrix blocks
// (A, B) evolve as U_A X U_B^dagger. Decay |r>->|1> stays inside a block;
// decay |r>->|0> moves weight into the block (A\a, B\a). The drive phase is a
// diagonal gauge: U(phi) = P(phi) W P(phi)^dagger with P = exp(i phi N_r), so
// the phase derivative is dU/dphi = i[N_r, U] and W only depends on the
// amplitude.

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rydgate/dynamics.hpp"
#include "rydgate/geometry.hpp"

namespace rydgate::engine {

inline constexpr int kMaxAtoms = 6;

struct ActiveSet {
    std::uint32_t mask = 0;
    int size = 1;
    std::vector<int> atoms;          // ascending
    std::vector<int> rydberg_count;  // per local index
    std::vector<int> global_index;   // base-3 register index per local index

    // Local bit position of `atom`, or -1 if it is not active.
    int bit_of(int atom) const;
};

// Active sets keyed by mask; atom j owns mask bit (n-1-j), so a computational
// basis index doubles as the mask of atoms in |1>.
class BlockBasis {
  public:
    explicit BlockBasis(int n_atoms);

    int n_atoms() const { return n_atoms_; }
    std::uint32_t n_masks() const { return 1u << n_atoms_; }
    const ActiveSet& set(std::uint32_t mask) const { return sets_[mask]; }
    std::uint32_t atom_bit(int atom) const { return 1u << (n_atoms_ - 1 - atom); }

  private:
    int n_atoms_;
    std::vector<ActiveSet> sets_;
};

// Starting matrix unit |row_local><col_local| inside block (row_mask, col_mask).
struct Origin {
    std::uint32_t row_mask = 0;
    std::uint32_t col_mask = 0;
    int row_local = 0;
    int col_local = 0;
};

struct ChainBlock {
    std::uint32_t row_mask = 0;
    std::uint32_t col_mask = 0;
    int rows = 1;
    int cols = 1;
    std::size_t offset = 0;
    int origin = 0;
    std::array<int, kMaxAtoms> child{};  // block after |r>->|0> on atom a, or -1
};

// Every block reachable from each origin. Without |r>->|0> decay only the root
// blocks exist.
class ChainLayout {
  public:
    ChainLayout(const BlockBasis& basis, std::vector<Origin> origins, bool with_ground_decay);

    const std::vector<Origin>& origins() const { return origins_; }
    const std::vector<ChainBlock>& blocks() const { return blocks_; }
    int root(int origin) const { return roots_[origin]; }
    std::size_t data_size() const { return data_size_; }

  private:
    std::vector<Origin> origins_;
    std::vector<ChainBlock> blocks_;
    std::vector<int> roots_;
    std::size_t data_size_ = 0;
};

std::vector<Origin> all_matrix_unit_origins(int n_atoms);

// Phase-free segment propagators W_A(amplitude) for one interaction matrix.
class PropagatorTable {
  public:
    PropagatorTable() = default;
    PropagatorTable(const BlockBasis& basis, const InteractionMatrix& interactions,
                    std::span<const double> amplitudes, double dt_us);

    int segments() const { return static_cast<int>(amplitude_index_.size()); }
    // Row-major W for active set `mask` during segment k.
    const std::vector<cplx>& phase_free(int k, std::uint32_t mask) const {
        return table_[amplitude_index_[k]][mask];
    }

  private:
    std::vector<int> amplitude_index_;
    std::vector<std::vector<std::vector<cplx>>> table_;  // [amplitude][mask]
};

// Density-matrix evolution of a batch of origins through a segmented pulse.
// Const methods keep all scratch local and may run concurrently.
class ChainEvolver {
  public:
    ChainEvolver(std::vector<Origin> origins, int n_atoms, const KrausChannel& channel);

    void set_hamiltonian(const InteractionMatrix& interactions, std::span<const double> amplitudes,
                         double dt_us);

    const BlockBasis& basis() const { return basis_; }
    const ChainLayout& layout() const { return layout_; }
    bool has_decay() const { return channel_.p > 0.0; }

    std::vector<cplx> initial_state() const;
    std::vector<cplx> run(std::span<const double> phases) const;

    // J = Re <seed, X_final> with <A, B> = sum conj(A) B. Adds dJ/dphi_k into grad.
    double gradient(std::span<const double> phases, const std::vector<cplx>& seed,
                    std::span<double> grad, std::vector<cplx>* final_state = nullptr) const;

    // Dense Liouville matrix on column-stacked vec(rho); needs all_matrix_unit_origins.
    Eigen::MatrixXcd superoperator(std::span<const double> phases) const;

  private:
    void apply_unitary(const std::vector<std::vector<cplx>>& u, const std::vector<cplx>& in,
                       std::vector<cplx>& out, std::vector<cplx>& scratch) const;
    void apply_unitary_adjoint(const std::vector<std::vector<cplx>>& u,
                               const std::vector<cplx>& in, std::vector<cplx>& out,
                               std::vector<cplx>& scratch) const;
    void apply_kraus(std::vector<cplx>& data) const;
    void apply_kraus_adjoint(std::vector<cplx>& data) const;
    double commutator_overlap(const std::vector<cplx>& adjoint, const std::vector<cplx>& state) const;
    void step_unitaries(int k, double phase, std::vector<std::vector<cplx>>& out) const;

    BlockBasis basis_;
    KrausChannel channel_;
    ChainLayout layout_;
    PropagatorTable table_;
};

// Gate-level computational-subspace channel
//   Lambda[(x', y'), (x, y)] = <x'| E(|x><y|) |y'>,   x, y, x', y' in {0,1}^n,
// row index x' * 2^n + y', column index x * 2^n + y. Uses pure-state
// propagation when there is no decay and Hermitian-paired origins otherwise.
class CompChannelEngine {
  public:
    CompChannelEngine(int n_atoms, const KrausChannel& channel);

    void set_hamiltonian(const InteractionMatrix& interactions, std::span<const double> amplitudes,
                         double dt_us);

    int n_atoms() const { return n_atoms_; }
    int comp_dim() const { return 1 << n_atoms_; }

    Eigen::MatrixXcd channel(std::span<const double> phases) const;

    // J = Re sum_{ij} weights(i, j) * Lambda(i, j). Adds dJ/dphi into grad and
    // optionally returns Lambda.
    double gradient(std::span<const double> phases, const Eigen::MatrixXcd& weights,
                    std::span<double> grad, Eigen::MatrixXcd* lambda = nullptr) const;

  private:
    double pure_gradient(std::span<const double> phases, const Eigen::MatrixXcd& weights,
                         std::span<double> grad, Eigen::MatrixXcd* lambda) const;
    std::vector<std::vector<cplx>> pure_run(std::span<const double> phases,
                                            std::vector<std::vector<std::vector<cplx>>>* traj) const;
    Eigen::MatrixXcd assemble(const std::vector<cplx>& final_state) const;

    int n_atoms_;
    KrausChannel channel_;
    BlockBasis basis_;
    ChainEvolver mixed_;
    PropagatorTable table_;
};

}  // namespace rydgate::engine
