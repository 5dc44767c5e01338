#include "rydgate/geometry.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "rydgate/errors.hpp"
#include "rydgate/rng.hpp"
#include "rydgate/units.hpp"

namespace rydgate {

NoiseModel NoiseModel::defaults() {
    NoiseModel noise;
    noise.decay_rate_per_us = 1.0 / 88.0;
    noise.sigma_x_um = 0.014;
    noise.sigma_y_um = 0.014;
    noise.sigma_z_um = 0.16;
    return noise;
}

void NoiseModel::validate() const {
    if (!(decay_rate_per_us >= 0.0) || !std::isfinite(decay_rate_per_us)) {
        throw InvalidArgument("decay rate must be finite and non-negative");
    }
    if (!(sigma_x_um >= 0.0 && sigma_y_um >= 0.0 && sigma_z_um >= 0.0)) {
        throw InvalidArgument("displacement widths must be non-negative");
    }
    if (!(branch_to_0 >= 0.0 && branch_to_1 >= 0.0 && branch_leak >= 0.0)) {
        throw InvalidArgument("decay branch fractions must be non-negative");
    }
    if (std::abs(branch_to_0 + branch_to_1 + branch_leak - 1.0) > 1e-9) {
        throw InvalidArgument("decay branch fractions must sum to 1");
    }
}

PhysicalConstants PhysicalConstants::defaults() {
    return {units::from_two_pi_mhz(862690.0), units::from_two_pi_mhz(10.0)};
}

void PhysicalConstants::validate() const {
    if (!(c6 > 0.0) || !(omega_max > 0.0)) {
        throw InvalidArgument("C6 and omega_max must be strictly positive");
    }
}

AtomLayout place_atoms(int n_targets, double radius_um) {
    if (n_targets < 1) {
        throw InvalidArgument("place_atoms: need at least one target");
    }
    if (!(radius_um > 0.0) || !std::isfinite(radius_um)) {
        throw InvalidArgument("place_atoms: radius must be positive");
    }
    AtomLayout layout;
    layout.n_targets = n_targets;
    layout.radius_um = radius_um;
    layout.positions.push_back({0.0, 0.0, 0.0});
    for (int j = 1; j <= n_targets; ++j) {
        const double theta = 2.0 * std::numbers::pi * j / n_targets;
        layout.positions.push_back({radius_um * std::cos(theta), radius_um * std::sin(theta), 0.0});
    }
    return layout;
}

AtomLayout layout_from_positions(std::vector<Vec3> positions) {
    if (positions.size() < 2) {
        throw InvalidArgument("layout needs a control and at least one target");
    }
    AtomLayout layout;
    layout.n_targets = static_cast<int>(positions.size()) - 1;
    double radius_sum = 0.0;
    for (std::size_t j = 1; j < positions.size(); ++j) {
        const auto& p = positions[j];
        const auto& c = positions[0];
        radius_sum += std::hypot(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
    }
    layout.radius_um = radius_sum / layout.n_targets;
    layout.positions = std::move(positions);
    return layout;
}

InteractionMatrix interaction_matrix(std::span<const Vec3> positions,
                                     const PhysicalConstants& constants) {
    constants.validate();
    const auto n = static_cast<Eigen::Index>(positions.size());
    InteractionMatrix out{Eigen::MatrixXd::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& a = positions[i];
            const auto& b = positions[j];
            const double dx = a[0] - b[0];
            const double dy = a[1] - b[1];
            const double dz = a[2] - b[2];
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (!(d2 > 0.0)) {
                throw DegenerateGeometry("atoms " + std::to_string(i) + " and " +
                                         std::to_string(j) + " coincide");
            }
            const double value = constants.c6 / (d2 * d2 * d2);
            if (!std::isfinite(value)) {
                throw DegenerateGeometry("interaction overflow between atoms " +
                                         std::to_string(i) + " and " + std::to_string(j));
            }
            out.v(i, j) = value;
            out.v(j, i) = value;
        }
    }
    return out;
}

std::vector<Vec3> displaced_positions(const AtomLayout& layout, const DisplacementSample& sample) {
    if (sample.deltas.size() != layout.positions.size()) {
        throw InvalidArgument("displacement sample does not match atom count");
    }
    std::vector<Vec3> out = layout.positions;
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            out[i][c] += sample.deltas[i][c];
        }
    }
    return out;
}

std::vector<DisplacementSample> sample_displacements(const NoiseModel& noise, int n_atoms,
                                                     int count, std::uint64_t seed) {
    if (!(noise.sigma_x_um >= 0.0 && noise.sigma_y_um >= 0.0 && noise.sigma_z_um >= 0.0)) {
        throw InvalidArgument("sample_displacements: widths must be non-negative");
    }
    if (count < 1 || n_atoms < 1) {
        throw InvalidArgument("sample_displacements: count and atom number must be >= 1");
    }
    const std::array<double, 3> sigma{noise.sigma_x_um, noise.sigma_y_um, noise.sigma_z_um};
    Rng rng(mix_seed(seed));
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<DisplacementSample> out(count);
    for (auto& sample : out) {
        sample.deltas.resize(n_atoms);
        for (auto& delta : sample.deltas) {
            for (int c = 0; c < 3; ++c) {
                // Always draw so the stream layout does not depend on which widths are zero.
                const double z = unit(rng);
                delta[c] = sigma[c] > 0.0 ? sigma[c] * z : 0.0;
            }
        }
    }
    return out;
}

void write_layout_table(std::ostream& out, const AtomLayout& layout) {
    out << "# index x_um y_um z_um (index 0 = control)\n";
    out.precision(17);
    for (std::size_t i = 0; i < layout.positions.size(); ++i) {
        const auto& p = layout.positions[i];
        out << i << ' ' << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
    }
}

AtomLayout read_layout_table(std::istream& in) {
    std::vector<Vec3> positions;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream row(line);
        std::size_t index = 0;
        Vec3 p{};
        if (!(row >> index >> p[0] >> p[1] >> p[2])) {
            throw ConfigError("line " + std::to_string(line_no), "expected 'index x y z'");
        }
        if (index != positions.size()) {
            throw ConfigError("line " + std::to_string(line_no), "atom indices must be 0,1,2,...");
        }
        positions.push_back(p);
    }
    return layout_from_positions(std::move(positions));
}

}  // namespace rydgate
