#include <cmath>

#include "doctest.h"
#include "rydgate/dynamics.hpp"
#include "rydgate/errors.hpp"
#include "rydgate/units.hpp"
#include "support.hpp"

using namespace rydgate;
using test::max_abs;

namespace {

InteractionMatrix single_atom() {
    InteractionMatrix v;
    v.v = Eigen::MatrixXd::Zero(1, 1);
    return v;
}

InteractionMatrix pair(double v12) {
    InteractionMatrix v;
    v.v = Eigen::MatrixXd::Zero(2, 2);
    v.v(0, 1) = v.v(1, 0) = v12;
    return v;
}

Eigen::MatrixXcd random_hermitian(int d, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXcd a(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            a(i, j) = {g(rng), g(rng)};
        }
    }
    return (a + a.adjoint()) / 2.0;
}

KrausChannel decay(double p) { return {p, 0.1354, 0.2504, 0.6142}; }

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("hilbert space indexing") {
    const HilbertSpace h(3);
    CHECK(h.dim == 27);
    const int levels[] = {2, 0, 1};
    const int idx = h.index_of(levels);
    CHECK(idx == 2 * 9 + 0 * 3 + 1);
    CHECK(h.level(idx, 0) == 2);
    CHECK(h.level(idx, 2) == 1);
}

TEST_CASE("single-atom hamiltonian couples only |1> and |r>") {
    const Eigen::MatrixXcd h = build_segment_hamiltonian(single_atom(), 4.0, 0.0);
    CHECK(std::abs(h(kRydberg, kQubit) - cplx(2.0, 0.0)) < 1e-15);
    CHECK(std::abs(h(kQubit, kRydberg) - cplx(2.0, 0.0)) < 1e-15);
    CHECK(h.row(kGround).norm() == 0.0);
    CHECK(h.col(kGround).norm() == 0.0);
    const Eigen::MatrixXcd hp = build_segment_hamiltonian(single_atom(), 4.0, 0.3);
    CHECK(std::abs(hp(kRydberg, kQubit) - std::polar(2.0, 0.3)) < 1e-15);
}

TEST_CASE("two Rydberg atoms pick up the pair shift") {
    const Eigen::MatrixXcd h = build_segment_hamiltonian(pair(17.5), 3.0, 1.1);
    const HilbertSpace hs(2);
    const int rr[] = {2, 2};
    const int idx = hs.index_of(rr);
    CHECK(std::abs(h(idx, idx) - cplx(17.5, 0.0)) < 1e-14);
    CHECK(max_abs(h - h.adjoint()) == 0.0);
}

TEST_CASE("zero hamiltonian propagates to identity") {
    const Eigen::MatrixXcd u = segment_propagator(Eigen::MatrixXcd::Zero(9, 9), 0.1);
    CHECK(max_abs(u - Eigen::MatrixXcd::Identity(9, 9)) < 1e-15);
}

TEST_CASE("full Rabi cycle flips the sign of |1>") {
    const double omega = 10.0;
    const double dt = units::kTwoPi / omega;
    const Eigen::MatrixXcd u = segment_propagator(build_segment_hamiltonian(single_atom(), omega, 0.0), dt);
    // exp(-i dt Omega/2 sigma_x) on {|1>, |r>} at Omega dt = 2 pi is -I.
    CHECK(std::abs(u(kQubit, kQubit) + 1.0) < 1e-12);
    CHECK(std::abs(u(kRydberg, kQubit)) < 1e-12);
    CHECK(std::abs(u(kGround, kGround) - 1.0) < 1e-15);
    // Quarter way: closed form cos/sin of Omega t / 2.
    const Eigen::MatrixXcd q =
        segment_propagator(build_segment_hamiltonian(single_atom(), omega, 0.0), dt / 4);
    CHECK(std::abs(q(kQubit, kQubit) - std::cos(M_PI / 4)) < 1e-12);
    CHECK(std::abs(q(kRydberg, kQubit) - cplx(0.0, -std::sin(M_PI / 4))) < 1e-12);
}

TEST_CASE("propagators of random hamiltonians are unitary") {
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const Eigen::MatrixXcd h = random_hermitian(27, seed) * 50.0;
        const Eigen::MatrixXcd u = segment_propagator(h, 0.0123);
        CHECK(max_abs(u.adjoint() * u - Eigen::MatrixXcd::Identity(27, 27)) < 1e-10);
    }
    const AtomLayout l = place_atoms(3, 3.5);
    const InteractionMatrix v = interaction_matrix(l.positions, PhysicalConstants::defaults());
    const Eigen::MatrixXcd u = segment_propagator(build_segment_hamiltonian(v, 62.8, 0.4), 0.00575);
    CHECK(max_abs(u.adjoint() * u - Eigen::MatrixXcd::Identity(81, 81)) < 1e-10);
}

TEST_CASE("non-hermitian input is rejected") {
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(3, 3);
    h(0, 1) = 1.0;
    CHECK_THROWS_AS(segment_propagator(h, 0.1), InvalidArgument);
    CHECK_THROWS_AS(segment_propagator(Eigen::MatrixXcd::Zero(3, 3), 0.0), InvalidArgument);
}

TEST_CASE("kraus completeness leaves only the leak") {
    const KrausChannel c = decay(0.03);
    const auto e = kraus_operators(c);
    Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
    for (const auto& m : e) {
        sum += m.transpose() * m;
    }
    Eigen::Matrix3d expected = Eigen::Matrix3d::Zero();
    expected.diagonal() << 1.0, 1.0, 1.0 - 0.03 * 0.6142;
    CHECK((sum - expected).cwiseAbs().maxCoeff() < 1e-16);
}

TEST_CASE("decay of a Rydberg atom") {
    const double p = 0.2;
    Eigen::VectorXcd r = Eigen::VectorXcd::Zero(3);
    r(kRydberg) = 1.0;
    const DensityMatrix out = apply_kraus(DensityMatrix::pure(r), decay(p));
    CHECK(std::abs(out.rho(2, 2).real() - (1 - p)) < 1e-15);
    CHECK(std::abs(out.rho(0, 0).real() - p * 0.1354) < 1e-15);
    CHECK(std::abs(out.rho(1, 1).real() - p * 0.2504) < 1e-15);
    CHECK(std::abs(out.trace() - (1 - p * 0.6142)) < 1e-15);
}

TEST_CASE("qubit-subspace states ignore decay") {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(9);
    psi(0) = 0.6;                 // |00>
    psi(4) = cplx(0.0, 0.8);      // |11>
    const DensityMatrix in = DensityMatrix::pure(psi);
    const DensityMatrix out = apply_kraus(in, decay(0.4));
    CHECK(max_abs(out.rho - in.rho) < 1e-16);
    Eigen::VectorXcd mixed = Eigen::VectorXcd::Constant(9, 1.0 / 3.0);
    const DensityMatrix m = DensityMatrix::pure(mixed);
    CHECK(max_abs(apply_kraus(m, KrausChannel::identity()).rho - m.rho) < 1e-16);
}

TEST_CASE("invalid kraus parameters are rejected") {
    CHECK_THROWS_AS(kraus_operators(KrausChannel{1.5, 0.1354, 0.2504, 0.6142}), InvalidArgument);
    CHECK_THROWS_AS(kraus_operators(KrausChannel{0.1, 0.5, 0.5, 0.5}), InvalidArgument);
}

TEST_CASE("per-step decay probability for the long gate") {
    NoiseModel n = NoiseModel::defaults();
    const PulseSchedule s = make_schedule(575.0, 100, 62.8, 10.0);
    const KrausChannel c = step_channel(n, s.segment_us());
    CHECK(c.p == doctest::Approx(0.00575 / 88.0).epsilon(1e-12));
    CHECK(c.p == doctest::Approx(6.534e-5).epsilon(1e-3));
}

TEST_CASE("no drive leaves the register alone") {
    const AtomLayout l = place_atoms(2, 3.5);
    const InteractionMatrix v = interaction_matrix(l.positions, PhysicalConstants::defaults());
    const PulseSchedule s = make_schedule(100.0, 10, 0.0, 0.0, test::random_phases(10, 3));
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(27);
    psi(13) = 1.0;  // |111>
    const DensityMatrix out = evolve(DensityMatrix::pure(psi), s, v, KrausChannel::identity());
    CHECK(max_abs(out.rho - DensityMatrix::pure(psi).rho) < 1e-14);
}

TEST_CASE("noiseless evolution preserves trace and validity") {
    const AtomLayout l = place_atoms(2, 3.5);
    const InteractionMatrix v = interaction_matrix(l.positions, PhysicalConstants::defaults());
    const PulseSchedule s = make_schedule(300.0, 50, units::kTwoPi * 10, 10.0, test::random_phases(50, 8));
    const DensityMatrix out =
        evolve(DensityMatrix::pure(test::product_input(3, 37)), s, v, KrausChannel::identity());
    CHECK(std::abs(out.trace() - 1.0) < 1e-10);
    CHECK(out.is_valid());
    const DensityMatrix leaky =
        evolve(DensityMatrix::pure(test::product_input(3, 37)), s, v, decay(0.01));
    CHECK(leaky.trace() < 1.0);
    CHECK(leaky.is_valid());
}

TEST_CASE("trotter defect shrinks at least 3.5x per doubling") {
    const InteractionMatrix v = pair(2.0 * M_PI * 30.0);
    const double T = 300.0;
    const double omax = units::kTwoPi * 10;
    auto phase_at = [](double x) { return 1.5 * std::sin(2 * M_PI * x) + 0.7 * std::cos(5.0 * x); };
    auto final_state = [&](int n) {
        std::vector<double> ph(n);
        for (int k = 0; k < n; ++k) {
            ph[k] = phase_at((k + 0.5) / n);
        }
        const PulseSchedule s = make_schedule(T, n, omax, 0.0, ph);
        return evolve(DensityMatrix::pure(test::product_input(2, 5)), s, v, KrausChannel::identity()).rho;
    };
    const Eigen::MatrixXcd reference = final_state(4096);
    double previous = -1.0;
    for (int n : {32, 64, 128, 256}) {
        const double defect = max_abs(final_state(n) - reference);
        if (previous > 0) {
            CHECK(previous / defect >= 3.5);
        }
        previous = defect;
    }
}

TEST_CASE("swapping the two targets relabels the output") {
    const AtomLayout l = place_atoms(2, 3.5);
    const InteractionMatrix v = interaction_matrix(l.positions, PhysicalConstants::defaults());
    const PulseSchedule s = make_schedule(200.0, 20, units::kTwoPi * 10, 10.0, test::random_phases(20, 4));
    const HilbertSpace h(3);
    auto swap_index = [&](int idx) {
        int lv[] = {h.level(idx, 0), h.level(idx, 2), h.level(idx, 1)};
        return h.index_of(lv);
    };
    const Eigen::VectorXcd psi = test::product_input(3, 4 * 4 * 1 + 4 * 2 + 3);
    Eigen::VectorXcd swapped(27);
    for (int i = 0; i < 27; ++i) {
        swapped(swap_index(i)) = psi(i);
    }
    const auto a = evolve(DensityMatrix::pure(psi), s, v, decay(1e-3)).rho;
    const auto b = evolve(DensityMatrix::pure(swapped), s, v, decay(1e-3)).rho;
    double worst = 0.0;
    for (int i = 0; i < 27; ++i) {
        for (int j = 0; j < 27; ++j) {
            worst = std::max(worst, std::abs(a(i, j) - b(swap_index(i), swap_index(j))));
        }
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("superoperator agrees with direct evolution") {
    const AtomLayout l = place_atoms(2, 3.5);
    const InteractionMatrix v = interaction_matrix(l.positions, PhysicalConstants::defaults());
    const PulseSchedule s = make_schedule(150.0, 15, units::kTwoPi * 10, 10.0, test::random_phases(15, 5));
    const Superoperator ch = evolve_channel(s, v, decay(2e-3));
    for (int input : {0, 21, 63}) {
        const DensityMatrix rho = DensityMatrix::pure(test::product_input(3, input));
        CHECK(max_abs(ch.apply(rho).rho - evolve(rho, s, v, decay(2e-3)).rho) < 1e-10);
    }
    DensityMatrix mixed{Eigen::MatrixXcd::Identity(27, 27) / 27.0};
    CHECK(ch.apply(mixed).trace() <= 1.0);
    CHECK(ch.apply(mixed).trace() < 1.0 - 1e-6);
}

TEST_CASE("idle schedule gives the identity channel") {
    const AtomLayout l = place_atoms(1, 3.5);
    const InteractionMatrix v = interaction_matrix(l.positions, PhysicalConstants::defaults());
    const PulseSchedule s = make_schedule(100.0, 5, 0.0, 0.0);
    const Superoperator ch = evolve_channel(s, v, KrausChannel::identity());
    // Only |rr> picks up a phase, exp(-i V T).
    Eigen::VectorXcd u = Eigen::VectorXcd::Ones(9);
    u(8) = std::exp(std::complex<double>(0.0, -v(0, 1) * 0.1));
    Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(81, 81);
    for (int i = 0; i < 9; ++i) {
        for (int j = 0; j < 9; ++j) {
            expected(i + 9 * j, i + 9 * j) = u(i) * std::conj(u(j));
        }
    }
    CHECK(max_abs(ch.matrix - expected) < 1e-9);
}

TEST_CASE("dense channel refuses five atoms") {
    const AtomLayout l = place_atoms(4, 3.5);
    const InteractionMatrix v = interaction_matrix(l.positions, PhysicalConstants::defaults());
    const PulseSchedule s = make_schedule(100.0, 5, 1.0, 0.0);
    CHECK_THROWS_AS(evolve_channel(s, v, KrausChannel::identity()), UnsupportedSize);
}

}
