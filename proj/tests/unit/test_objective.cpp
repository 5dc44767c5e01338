#include <cmath>

#include "doctest.h"
#include "rydgate/errors.hpp"
#include "rydgate/objective.hpp"
#include "rydgate/optimizer.hpp"
#include "rydgate/units.hpp"
#include "support.hpp"

using namespace rydgate;

namespace {

Eigen::VectorXcd basis_state(int n, std::initializer_list<int> levels) {
    int dim = 1;
    for (int j = 0; j < n; ++j) {
        dim *= 3;
    }
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim);
    int idx = 0;
    for (int l : levels) {
        idx = idx * 3 + l;
    }
    v(idx) = 1.0;
    return v;
}

// Random diagonal unitary channel on the computational subspace.
Eigen::MatrixXcd diagonal_channel(const std::vector<cplx>& u) {
    const int d = static_cast<int>(u.size());
    Eigen::MatrixXcd lambda = Eigen::MatrixXcd::Zero(d * d, d * d);
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            lambda(a * d + b, a * d + b) = u[a] * std::conj(u[b]);
        }
    }
    return lambda;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("single-atom input set") {
    const InputStateSet s = input_state_set(1);
    REQUIRE(s.size() == 4);
    const double h = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(s.states[0](0) - 1.0) < 1e-15);
    CHECK(std::abs(s.states[1](1) - 1.0) < 1e-15);
    CHECK(std::abs(s.states[2](0) - h) < 1e-15);
    CHECK(std::abs(s.states[2](1) - h) < 1e-15);
    CHECK(std::abs(s.states[3](1) - cplx(0.0, h)) < 1e-15);
    const cplx overlap = s.states[2].dot(s.states[3]);
    CHECK(std::abs(overlap - cplx(0.5, 0.5)) < 1e-15);
    // <+|i> = (1 - i)/2 with the bra on the left.
    CHECK(std::abs(std::conj(overlap) - cplx(0.5, -0.5)) < 1e-15);
}

TEST_CASE("three-atom input set matches the product oracle") {
    const InputStateSet s = input_state_set(3);
    REQUIRE(s.size() == 64);
    for (int i = 0; i < 64; ++i) {
        CHECK(std::abs(s.states[i].norm() - 1.0) < 1e-14);
        const Eigen::VectorXcd full = embed_computational(s.states[i], 3);
        CHECK((full - test::product_input(3, i)).norm() < 1e-14);
    }
}

TEST_CASE("ideal output applies the controlled sign") {
    const GateTarget t{2, {}, true};
    const auto in101 = basis_state(3, {1, 0, 1});
    CHECK((ideal_output(t, in101) + in101).norm() < 1e-15);
    const auto in011 = basis_state(3, {0, 1, 1});
    CHECK((ideal_output(t, in011) - in011).norm() < 1e-15);
    const auto in111 = basis_state(3, {1, 1, 1});
    CHECK((ideal_output(t, in111) - in111).norm() < 1e-15);
    const GateTarget phased{2, {M_PI, 0.0, 0.0}, true};
    const auto in100 = basis_state(3, {1, 0, 0});
    CHECK((ideal_output(phased, in100) + in100).norm() < 1e-15);
    CHECK_THROWS_AS(ideal_output(t, basis_state(3, {2, 0, 1})), InvalidArgument);
}

TEST_CASE("ideal output agrees with the sign oracle on random inputs") {
    for (int n_t : {1, 2, 3}) {
        const int n = n_t + 1;
        std::vector<double> theta = test::random_phases(n, 40 + n);
        const GateTarget t{n_t, theta, true};
        for (int s = 0; s < (1 << (2 * n)); s += 5) {
            const Eigen::VectorXcd psi = test::product_input(n, s);
            CHECK((ideal_output(t, psi) - test::reference_target(psi, n, theta)).norm() < 1e-14);
        }
    }
}

TEST_CASE("state fidelity is linear in rho") {
    const Eigen::VectorXcd t = test::product_input(2, 11);
    const Eigen::VectorXcd perp = basis_state(2, {2, 2});
    CHECK(state_fidelity(DensityMatrix::pure(t), t) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(state_fidelity(DensityMatrix::pure(perp), t) == 0.0);
    DensityMatrix mix{0.98 * DensityMatrix::pure(t).rho + 0.02 * DensityMatrix::pure(perp).rho};
    CHECK(state_fidelity(mix, t) == doctest::Approx(0.98).epsilon(1e-14));
    CHECK_THROWS_AS(state_fidelity(mix, 2.0 * t), InvalidArgument);
}

TEST_CASE("weights reproduce the average over inputs") {
    for (int n_t : {1, 2}) {
        const int n = n_t + 1;
        const int d = 1 << n;
        std::vector<cplx> u(d);
        const auto ph = test::random_phases(d, 3 + n);
        for (int x = 0; x < d; ++x) {
            u[x] = std::polar(1.0, ph[x]);
        }
        const std::vector<double> theta = test::random_phases(n, 8);
        const GateTarget t{n_t, theta, true};
        // Oracle: average |<target|U|psi>|^2 over the product inputs.
        const InputStateSet inputs = input_state_set(n);
        double expected = 0.0;
        for (const auto& psi : inputs.states) {
            Eigen::VectorXcd out = psi;
            for (int x = 0; x < d; ++x) {
                out(x) *= u[x];
            }
            const Eigen::VectorXcd tgt =
                test::reference_target(embed_computational(psi, n), n, theta);
            const cplx amp = embed_computational(out, n).dot(tgt);
            expected += std::norm(amp);
        }
        expected /= inputs.size();
        CHECK(channel_fidelity(t, diagonal_channel(u)) == doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("exact gate scores one") {
    const GateTarget t{3, {}, false};
    std::vector<cplx> u(16);
    for (int x = 0; x < 16; ++x) {
        u[x] = t.diagonal(x);
    }
    CHECK(channel_fidelity(t, diagonal_channel(u)) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("theta gradient matches finite differences") {
    const int d = 8;
    std::vector<cplx> u(d);
    const auto ph = test::random_phases(d, 21);
    for (int x = 0; x < d; ++x) {
        u[x] = std::polar(1.0, ph[x]);
    }
    const Eigen::MatrixXcd lambda = diagonal_channel(u);
    const std::vector<double> theta{0.2, -0.7, 1.3};
    std::vector<double> grad;
    channel_fidelity(GateTarget{2, theta, true}, lambda, &grad);
    for (int j = 0; j < 3; ++j) {
        auto plus = theta;
        auto minus = theta;
        plus[j] += 1e-6;
        minus[j] -= 1e-6;
        const double fd = (channel_fidelity(GateTarget{2, plus, true}, lambda) -
                           channel_fidelity(GateTarget{2, minus, true}, lambda)) / 2e-6;
        CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("smoothness plug-in values") {
    const SmoothnessParams quad{0.01, 1.0, 2.0, 0.1};
    CHECK(std::abs(smoothness_term(0.05, quad) - 2.5e-5) < 1e-12);
    const std::vector<double> pair{0.3, 0.35};
    CHECK(std::abs(smoothness_cost(pair, quad) - 2.5e-5) < 1e-12);
    const SmoothnessParams big{0.0, 1.0, 2.0, 0.1};
    CHECK(std::abs(smoothness_term(0.6, big) - (std::exp(1.0) - 1.0)) < 1e-12);
    CHECK(std::abs(smoothness_term(0.6, big) - 1.71828) < 1e-5);
}

TEST_CASE("smoothness branches meet at tau") {
    for (double tau : {0.05, 0.1, 0.3, 1.0}) {
        const SmoothnessParams p{0.01, 1.0, 2.0, tau};
        CHECK(smoothness_term(tau, p) == 0.01 * tau * tau);
        CHECK(smoothness_term(std::nextafter(tau, 10.0), p) ==
              doctest::Approx(0.01 * tau * tau).epsilon(1e-12));
    }
}

TEST_CASE("smoothness is non-decreasing in each jump") {
    const SmoothnessParams p{0.01, 1.0, 2.0, 0.1};
    double last = -1.0;
    for (int i = 0; i <= 400; ++i) {
        const double v = smoothness_term(0.005 * i, p);
        CHECK(v >= last);
        last = v;
    }
}

TEST_CASE("smoothness gradient matches finite differences") {
    const SmoothnessParams p{0.01, 1.0, 2.0, 0.1};
    std::vector<double> ph{0.0, 0.03, 0.5, 0.45, -0.2, -0.25, 0.9};
    std::vector<double> grad(ph.size(), 0.0);
    smoothness_gradient(ph, p, grad);
    const auto fd = central_difference(
        [&](std::span<const double> x) { return smoothness_cost(x, p); }, ph, 1e-7);
    for (std::size_t k = 0; k < ph.size(); ++k) {
        CHECK(grad[k] == doctest::Approx(fd[k]).epsilon(1e-6).scale(1e-9));
    }
    std::vector<double> flat(10, 0.4);
    std::vector<double> g0(10, 0.0);
    smoothness_gradient(flat, p, g0);
    for (double g : g0) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("loss adds infidelity and penalty") {
    const SmoothnessParams p{0.01, 1.0, 2.0, 0.1};
    const std::vector<double> ph{0.0, 0.05, 0.7};
    const LossBreakdown l = total_loss(0.98, ph, p);
    CHECK(l.mean_infidelity == doctest::Approx(0.02));
    CHECK(l.total == l.mean_infidelity + l.smoothness_cost);
    const std::vector<double> flat(5, 1.0);
    const LossBreakdown perfect = total_loss(1.0, flat, p);
    CHECK(perfect.total == 0.0);
    CHECK(total_loss((0.99 + 0.97) / 2, flat, p).mean_infidelity == doctest::Approx(0.02));
}

TEST_CASE("per-CZ error divides by the number of targets") {
    CHECK(per_cz_error(0.9955, 2) == doctest::Approx(0.00225).epsilon(1e-12));
    CHECK(per_cz_error(0.9924, 3) == doctest::Approx(0.0076 / 3).epsilon(1e-12));
    CHECK(per_cz_error(1.0, 3) == 0.0);
    CHECK_THROWS_AS(per_cz_error(1.2, 2), InvalidArgument);
    CHECK_THROWS_AS(per_cz_error(0.9, 0), InvalidArgument);
}

TEST_CASE("batch fidelity is deterministic and bounded") {
    const AtomLayout l = place_atoms(2, 3.5);
    const PulseSchedule s = make_schedule(200.0, 20, units::kTwoPi * 10, 10.0, test::random_phases(20, 1));
    const GateTarget t{2, {}, true};
    const auto a = batch_fidelity(s, l, NoiseModel::defaults(), t, 8, 5);
    const auto b = batch_fidelity(s, l, NoiseModel::defaults(), t, 8, 5);
    CHECK(a == b);
    CHECK(a.first >= 0.0);
    CHECK(a.first <= 1.0);
    CHECK(a.second >= 0.0);
    const auto ideal = batch_fidelity(s, l, NoiseModel::ideal(), t, 8, 5);
    CHECK(ideal.second == 0.0);
}

TEST_CASE("swapping targets leaves the batch fidelity unchanged") {
    ProblemSpec p;
    p.layout = place_atoms(2, 3.5);
    p.target = GateTarget{2, {}, true};
    p.duration_ns = 200.0;
    p.n_segments = 20;
    p.noise = NoiseModel::defaults();
    ProblemSpec q = p;
    q.layout = layout_from_positions({p.layout.positions[0], p.layout.positions[2], p.layout.positions[1]});
    const auto samples = sample_displacements(p.noise, 3, 4, 12);
    std::vector<DisplacementSample> swapped = samples;
    for (auto& s : swapped) {
        std::swap(s.deltas[1], s.deltas[2]);
    }
    const auto ph = test::random_phases(20, 6);
    const std::vector<double> theta{0.1, 0.4, 0.4};
    const double a = FidelityModel(p).evaluate(ph, theta, samples, false).mean;
    const double b = FidelityModel(q).evaluate(ph, theta, swapped, false).mean;
    CHECK(a == doctest::Approx(b).epsilon(1e-13));
}

}
