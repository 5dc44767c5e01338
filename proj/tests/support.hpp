#pragma once

// Independent dense references used to cross-check the fast paths.

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rydgate/dynamics.hpp"
#include "rydgate/geometry.hpp"
#include "rydgate/objective.hpp"

namespace rydgate::test {

inline double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

inline std::vector<double> random_phases(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-M_PI, M_PI);
    std::vector<double> out(n);
    for (auto& x : out) {
        x = u(rng);
    }
    return out;
}

// Single-atom amplitudes of |0>, |1>, |+>, |i>.
inline std::array<std::complex<double>, 2> single_input(int s) {
    const double h = 1.0 / std::sqrt(2.0);
    switch (s) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {h, h};
        default: return {h, std::complex<double>(0.0, h)};
    }
}

// |psi> on the 3^n register built digit by digit, no library helpers.
inline Eigen::VectorXcd product_input(int n, int index) {
    std::vector<int> digits(n);
    for (int j = n - 1; j >= 0; --j) {
        digits[j] = index % 4;
        index /= 4;
    }
    int dim = 1;
    for (int j = 0; j < n; ++j) {
        dim *= 3;
    }
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim);
    for (int x = 0; x < (1 << n); ++x) {
        std::complex<double> amp = 1.0;
        int idx = 0;
        for (int j = 0; j < n; ++j) {
            const int bit = (x >> (n - 1 - j)) & 1;
            amp *= single_input(digits[j])[bit];
            idx = idx * 3 + bit;
        }
        psi(idx) = amp;
    }
    return psi;
}

// Target state: sign (-1)^{c * sum t} and e^{i theta_j} per |1>.
inline Eigen::VectorXcd reference_target(const Eigen::VectorXcd& psi, int n,
                                         const std::vector<double>& theta) {
    Eigen::VectorXcd out = psi;
    for (int idx = 0; idx < psi.size(); ++idx) {
        int rest = idx;
        std::vector<int> lv(n);
        for (int j = n - 1; j >= 0; --j) {
            lv[j] = rest % 3;
            rest /= 3;
        }
        int ones = 0;
        double phase = 0.0;
        for (int j = 0; j < n; ++j) {
            if (lv[j] == 1) {
                phase += theta.empty() ? 0.0 : theta[j];
                if (j > 0) {
                    ++ones;
                }
            }
        }
        const double sign = (lv[0] == 1 && ones % 2 == 1) ? -1.0 : 1.0;
        out(idx) *= sign * std::polar(1.0, phase);
    }
    return out;
}

// Mean state fidelity over all 4^n product inputs via dense density-matrix evolution.
inline double dense_fidelity(const PulseSchedule& schedule, const InteractionMatrix& v,
                             const KrausChannel& channel, const std::vector<double>& theta) {
    const int n = v.n_atoms();
    int count = 1;
    for (int j = 0; j < n; ++j) {
        count *= 4;
    }
    double sum = 0.0;
    for (int s = 0; s < count; ++s) {
        const Eigen::VectorXcd psi = product_input(n, s);
        const DensityMatrix out = evolve(DensityMatrix::pure(psi), schedule, v, channel);
        const Eigen::VectorXcd t = reference_target(psi, n, theta);
        sum += (t.adjoint() * out.rho * t)(0, 0).real();
    }
    return sum / count;
}

}  // namespace rydgate::test
