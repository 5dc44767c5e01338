#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rydgate/dynamics.hpp"
#include "rydgate/objective.hpp"

namespace rydgate {

// R_ij = 2^-n Tr[P_i E(P_j)] over the computational subspace. Pauli index i
// reads as a base-4 string over {I, X, Y, Z}, qubit 0 most significant.
struct PauliTransferMap {
    int n_qubits = 0;
    Eigen::MatrixXd r;

    int size() const { return static_cast<int>(r.rows()); }
};

std::string pauli_label(int index, int n_qubits);
int pauli_index(const std::string& label);
Eigen::MatrixXcd pauli_matrix(int index, int n_qubits);

// Inputs embedded with zero |r> amplitude, outputs projected onto {|0>,|1>}^n.
// Throws InvalidArgument unless the channel acts on 3^n_qubits levels, and
// UnsupportedSize above four qubits.
PauliTransferMap compute_ptm(const Superoperator& channel, int n_qubits);

// Map of rho -> U rho U^dag for a unitary on the 3^n_qubits register.
PauliTransferMap compute_ptm_unitary(const Eigen::MatrixXcd& unitary, int n_qubits);

// Same map from a computational channel Lambda (CompChannelEngine layout).
PauliTransferMap ptm_from_comp_channel(const Eigen::MatrixXcd& lambda, int n_qubits);

// Removes the virtual Z rotations e^{i theta_j} from the output of Lambda.
Eigen::MatrixXcd undo_compensation(const Eigen::MatrixXcd& lambda, const std::vector<double>& theta);

// Conjugation of every Pauli by the diagonal gate unitary.
PauliTransferMap ideal_ptm(const GateTarget& gate);

// Computational channel of the exact diagonal gate, in the same layout as
// ptm_from_comp_channel expects.
Eigen::MatrixXcd ideal_comp_channel(const GateTarget& gate);

// Element-wise mean; all maps must share a size.
PauliTransferMap average_ptm(const std::vector<PauliTransferMap>& maps);

struct ErrorChannel {
    int input = 0;
    int output = 0;
    std::string input_label;
    std::string output_label;
    double magnitude = 0.0;
    // "X<->Y", "Z<->I", "diagonal" or "other", judged by comparing the output
    // Pauli with the ideal image of the input.
    std::string channel_class;
};

// Entries of |real - ideal| above threshold, largest first; near-ties are
// ordered by (input, output).
std::vector<ErrorChannel> rank_error_channels(const PauliTransferMap& real,
                                              const PauliTransferMap& ideal,
                                              double threshold = 1e-3);

void write_ptm_csv(std::ostream& out, const PauliTransferMap& ptm);
PauliTransferMap read_ptm_csv(std::istream& in);
void write_ranking_csv(std::ostream& out, const std::vector<ErrorChannel>& ranking);
// Heatmap of log10 |R_ij| clipped at `floor`.
void write_ptm_svg(std::ostream& out, const PauliTransferMap& ptm, const std::string& title,
                   double floor = 1e-4);

}  // namespace rydgate
