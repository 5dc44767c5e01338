#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rydgate/noise_model.hpp"

namespace rydgate {

using Vec3 = std::array<double, 3>;

struct PhysicalConstants {
    double c6 = 0.0;         // rad/us * um^6
    double omega_max = 0.0;  // rad/us

    // C6 = 862690 x 2pi MHz um^6, Omega_max = 2pi x 10 MHz.
    static PhysicalConstants defaults();
    void validate() const;
};

// Control atom at index 0, targets at 1..N. Positions in um.
struct AtomLayout {
    int n_targets = 0;
    double radius_um = 0.0;
    std::vector<Vec3> positions;

    int n_atoms() const { return static_cast<int>(positions.size()); }
};

// Symmetric pairwise interaction strengths V_ij in rad/us, zero diagonal.
struct InteractionMatrix {
    Eigen::MatrixXd v;

    int n_atoms() const { return static_cast<int>(v.rows()); }
    double operator()(int i, int j) const { return v(i, j); }
};

struct DisplacementSample {
    std::vector<Vec3> deltas;
};

// Control at the origin, target j at angle 2 pi j / N on a circle of radius R.
AtomLayout place_atoms(int n_targets, double radius_um);

// Wraps explicit coordinates. Index 0 is the control.
AtomLayout layout_from_positions(std::vector<Vec3> positions);

// V_ij = C6 / |x_i - x_j|^6. Throws DegenerateGeometry for coincident atoms.
InteractionMatrix interaction_matrix(std::span<const Vec3> positions,
                                     const PhysicalConstants& constants);

std::vector<Vec3> displaced_positions(const AtomLayout& layout, const DisplacementSample& sample);

// Independent zero-mean Gaussians per component, untruncated.
std::vector<DisplacementSample> sample_displacements(const NoiseModel& noise, int n_atoms,
                                                     int count, std::uint64_t seed);

// Plain-text table: "index x_um y_um z_um" per line, '#' comments allowed.
void write_layout_table(std::ostream& out, const AtomLayout& layout);
AtomLayout read_layout_table(std::istream& in);

}  // namespace rydgate
