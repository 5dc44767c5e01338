#include "rydgate/block_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "rydgate/errors.hpp"

namespace rydgate::engine {

namespace {

constexpr int remove_bit(int x, int bit) {
    return ((x >> (bit + 1)) << bit) | (x & ((1 << bit) - 1));
}

}  // namespace

int ActiveSet::bit_of(int atom) const {
    const auto it = std::find(atoms.begin(), atoms.end(), atom);
    if (it == atoms.end()) {
        return -1;
    }
    return static_cast<int>(atoms.size()) - 1 - static_cast<int>(it - atoms.begin());
}

BlockBasis::BlockBasis(int n_atoms) : n_atoms_(n_atoms) {
    if (n_atoms < 1 || n_atoms > kMaxAtoms) {
        throw UnsupportedSize("block engine supports 1.." + std::to_string(kMaxAtoms) + " atoms");
    }
    sets_.resize(n_masks());
    for (std::uint32_t mask = 0; mask < n_masks(); ++mask) {
        ActiveSet& s = sets_[mask];
        s.mask = mask;
        for (int atom = 0; atom < n_atoms; ++atom) {
            if (mask & atom_bit(atom)) {
                s.atoms.push_back(atom);
            }
        }
        const int m = static_cast<int>(s.atoms.size());
        s.size = 1 << m;
        s.rydberg_count.resize(s.size);
        s.global_index.resize(s.size);
        for (int local = 0; local < s.size; ++local) {
            s.rydberg_count[local] = std::popcount(static_cast<unsigned>(local));
            int index = 0;
            for (int atom = 0; atom < n_atoms; ++atom) {
                int level = kGround;
                const auto it = std::find(s.atoms.begin(), s.atoms.end(), atom);
                if (it != s.atoms.end()) {
                    const int bit = m - 1 - static_cast<int>(it - s.atoms.begin());
                    level = (local >> bit) & 1 ? kRydberg : kQubit;
                }
                index = index * 3 + level;
            }
            s.global_index[local] = index;
        }
    }
}

ChainLayout::ChainLayout(const BlockBasis& basis, std::vector<Origin> origins,
                         bool with_ground_decay)
    : origins_(std::move(origins)) {
    const int n = basis.n_atoms();
    std::vector<int> by_removed(basis.n_masks(), -1);
    for (int o = 0; o < static_cast<int>(origins_.size()); ++o) {
        const Origin& origin = origins_[o];
        const std::uint32_t common = origin.row_mask & origin.col_mask;
        std::fill(by_removed.begin(), by_removed.end(), -1);
        const std::size_t first = blocks_.size();
        // Enumerate subsets of `common` (only the empty one without ground decay).
        std::uint32_t removed = 0;
        for (;;) {
            ChainBlock b;
            b.row_mask = origin.row_mask & ~removed;
            b.col_mask = origin.col_mask & ~removed;
            b.rows = basis.set(b.row_mask).size;
            b.cols = basis.set(b.col_mask).size;
            b.offset = data_size_;
            b.origin = o;
            b.child.fill(-1);
            data_size_ += static_cast<std::size_t>(b.rows) * b.cols;
            by_removed[removed] = static_cast<int>(blocks_.size());
            blocks_.push_back(b);
            if (!with_ground_decay || removed == common) {
                break;
            }
            removed = (removed - common) & common;
        }
        for (std::size_t bi = first; bi < blocks_.size(); ++bi) {
            ChainBlock& b = blocks_[bi];
            const std::uint32_t removed_here = origin.row_mask & ~b.row_mask;
            for (int atom = 0; atom < n; ++atom) {
                const std::uint32_t bit = basis.atom_bit(atom);
                if ((common & bit) && !(removed_here & bit)) {
                    b.child[atom] = by_removed[removed_here | bit];
                }
            }
        }
        roots_.push_back(static_cast<int>(first));
    }
}

std::vector<Origin> all_matrix_unit_origins(int n_atoms) {
    const HilbertSpace space(n_atoms);
    const BlockBasis basis(n_atoms);
    // Locate each register index inside its active set.
    std::vector<std::pair<std::uint32_t, int>> where(space.dim);
    for (std::uint32_t mask = 0; mask < basis.n_masks(); ++mask) {
        const ActiveSet& s = basis.set(mask);
        for (int local = 0; local < s.size; ++local) {
            where[s.global_index[local]] = {mask, local};
        }
    }
    std::vector<Origin> origins;
    origins.reserve(static_cast<std::size_t>(space.dim) * space.dim);
    // Column-major order so origin index == vec index i + j * dim.
    for (int j = 0; j < space.dim; ++j) {
        for (int i = 0; i < space.dim; ++i) {
            origins.push_back({where[i].first, where[j].first, where[i].second, where[j].second});
        }
    }
    return origins;
}

PropagatorTable::PropagatorTable(const BlockBasis& basis, const InteractionMatrix& interactions,
                                 std::span<const double> amplitudes, double dt_us) {
    const int n = basis.n_atoms();
    if (interactions.n_atoms() != n) {
        throw InvalidArgument("interaction matrix has " + std::to_string(interactions.n_atoms()) +
                              " atoms, register has " + std::to_string(n));
    }
    if (!(dt_us > 0.0)) {
        throw InvalidArgument("segment duration must be positive");
    }
    std::vector<double> distinct;
    amplitude_index_.reserve(amplitudes.size());
    for (double a : amplitudes) {
        if (!std::isfinite(a)) {
            throw NumericalFailure("non-finite drive amplitude");
        }
        auto it = std::find(distinct.begin(), distinct.end(), a);
        if (it == distinct.end()) {
            distinct.push_back(a);
            it = distinct.end() - 1;
        }
        amplitude_index_.push_back(static_cast<int>(it - distinct.begin()));
    }

    table_.resize(distinct.size());
    for (std::size_t ai = 0; ai < distinct.size(); ++ai) {
        table_[ai].resize(basis.n_masks());
        for (std::uint32_t mask = 0; mask < basis.n_masks(); ++mask) {
            const ActiveSet& s = basis.set(mask);
            const int m = static_cast<int>(s.atoms.size());
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(s.size, s.size);
            for (int local = 0; local < s.size; ++local) {
                double diag = 0.0;
                for (int i = 0; i < m; ++i) {
                    if (!((local >> (m - 1 - i)) & 1)) {
                        continue;
                    }
                    for (int j = i + 1; j < m; ++j) {
                        if ((local >> (m - 1 - j)) & 1) {
                            diag += interactions(s.atoms[i], s.atoms[j]);
                        }
                    }
                }
                h(local, local) = diag;
                for (int bit = 0; bit < m; ++bit) {
                    h(local ^ (1 << bit), local) = 0.5 * distinct[ai];
                }
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
            if (solver.info() != Eigen::Success) {
                throw NumericalFailure("block eigendecomposition failed");
            }
            const Eigen::MatrixXd& q = solver.eigenvectors();
            Eigen::VectorXcd ph(s.size);
            for (int i = 0; i < s.size; ++i) {
                ph(i) = std::polar(1.0, -dt_us * solver.eigenvalues()(i));
            }
            const Eigen::MatrixXcd w = q.cast<cplx>() * ph.asDiagonal() * q.transpose().cast<cplx>();
            auto& flat = table_[ai][mask];
            flat.resize(static_cast<std::size_t>(s.size) * s.size);
            for (int r = 0; r < s.size; ++r) {
                for (int c = 0; c < s.size; ++c) {
                    flat[static_cast<std::size_t>(r) * s.size + c] = w(r, c);
                }
            }
        }
    }
}

ChainEvolver::ChainEvolver(std::vector<Origin> origins, int n_atoms, const KrausChannel& channel)
    : basis_(n_atoms),
      channel_((channel.validate(), channel)),
      layout_(basis_, std::move(origins), channel.p * channel.to_ground > 0.0) {}

void ChainEvolver::set_hamiltonian(const InteractionMatrix& interactions,
                                   std::span<const double> amplitudes, double dt_us) {
    table_ = PropagatorTable(basis_, interactions, amplitudes, dt_us);
}

std::vector<cplx> ChainEvolver::initial_state() const {
    std::vector<cplx> data(layout_.data_size(), cplx{});
    for (int o = 0; o < static_cast<int>(layout_.origins().size()); ++o) {
        const ChainBlock& b = layout_.blocks()[layout_.root(o)];
        const Origin& origin = layout_.origins()[o];
        data[b.offset + static_cast<std::size_t>(origin.row_local) * b.cols + origin.col_local] = 1.0;
    }
    return data;
}

void ChainEvolver::step_unitaries(int k, double phase,
                                  std::vector<std::vector<cplx>>& out) const {
    const int n = basis_.n_atoms();
    std::array<cplx, 2 * kMaxAtoms + 1> factor;
    for (int d = -n; d <= n; ++d) {
        factor[d + n] = std::polar(1.0, phase * d);
    }
    out.resize(basis_.n_masks());
    for (std::uint32_t mask = 0; mask < basis_.n_masks(); ++mask) {
        const ActiveSet& s = basis_.set(mask);
        const auto& w = table_.phase_free(k, mask);
        auto& u = out[mask];
        u.resize(w.size());
        for (int r = 0; r < s.size; ++r) {
            for (int c = 0; c < s.size; ++c) {
                const std::size_t idx = static_cast<std::size_t>(r) * s.size + c;
                u[idx] = factor[s.rydberg_count[r] - s.rydberg_count[c] + n] * w[idx];
            }
        }
    }
}

void ChainEvolver::apply_unitary(const std::vector<std::vector<cplx>>& u,
                                 const std::vector<cplx>& in, std::vector<cplx>& out,
                                 std::vector<cplx>& scratch) const {
    out.resize(in.size());
    for (const ChainBlock& b : layout_.blocks()) {
        const int rows = b.rows;
        const int cols = b.cols;
        const cplx* x = in.data() + b.offset;
        cplx* y = out.data() + b.offset;
        const cplx* ur = u[b.row_mask].data();
        const cplx* uc = u[b.col_mask].data();
        scratch.assign(static_cast<std::size_t>(rows) * cols, cplx{});
        cplx* t = scratch.data();
        // t = U_row x
        for (int i = 0; i < rows; ++i) {
            for (int k = 0; k < rows; ++k) {
                const cplx a = ur[i * rows + k];
                const cplx* xk = x + k * cols;
                cplx* ti = t + i * cols;
                for (int j = 0; j < cols; ++j) {
                    ti[j] += a * xk[j];
                }
            }
        }
        // y = t U_col^dagger
        for (int i = 0; i < rows; ++i) {
            const cplx* ti = t + i * cols;
            for (int j = 0; j < cols; ++j) {
                const cplx* ucj = uc + j * cols;
                cplx acc{};
                for (int k = 0; k < cols; ++k) {
                    acc += ti[k] * std::conj(ucj[k]);
                }
                y[i * cols + j] = acc;
            }
        }
    }
}

void ChainEvolver::apply_unitary_adjoint(const std::vector<std::vector<cplx>>& u,
                                         const std::vector<cplx>& in, std::vector<cplx>& out,
                                         std::vector<cplx>& scratch) const {
    out.resize(in.size());
    for (const ChainBlock& b : layout_.blocks()) {
        const int rows = b.rows;
        const int cols = b.cols;
        const cplx* x = in.data() + b.offset;
        cplx* y = out.data() + b.offset;
        const cplx* ur = u[b.row_mask].data();
        const cplx* uc = u[b.col_mask].data();
        scratch.assign(static_cast<std::size_t>(rows) * cols, cplx{});
        cplx* t = scratch.data();
        // t = U_row^dagger x
        for (int k = 0; k < rows; ++k) {
            const cplx* xk = x + k * cols;
            for (int i = 0; i < rows; ++i) {
                const cplx a = std::conj(ur[k * rows + i]);
                cplx* ti = t + i * cols;
                for (int j = 0; j < cols; ++j) {
                    ti[j] += a * xk[j];
                }
            }
        }
        // y = t U_col
        for (int i = 0; i < rows; ++i) {
            cplx* yi = y + i * cols;
            std::fill(yi, yi + cols, cplx{});
            const cplx* ti = t + i * cols;
            for (int k = 0; k < cols; ++k) {
                const cplx a = ti[k];
                const cplx* uck = uc + k * cols;
                for (int j = 0; j < cols; ++j) {
                    yi[j] += a * uck[j];
                }
            }
        }
    }
}

void ChainEvolver::apply_kraus(std::vector<cplx>& data) const {
    if (channel_.p <= 0.0) {
        return;
    }
    const double keep = std::sqrt(1.0 - channel_.p);
    const double to_qubit = channel_.p * channel_.to_qubit;
    const double to_ground = channel_.p * channel_.to_ground;
    const auto& blocks = layout_.blocks();
    for (int atom = 0; atom < basis_.n_atoms(); ++atom) {
        for (const ChainBlock& b : blocks) {
            const int br = basis_.set(b.row_mask).bit_of(atom);
            const int bc = basis_.set(b.col_mask).bit_of(atom);
            if (br < 0 && bc < 0) {
                continue;
            }
            cplx* x = data.data() + b.offset;
            const int mr = br >= 0 ? 1 << br : 0;
            const int mc = bc >= 0 ? 1 << bc : 0;
            if (br >= 0 && bc >= 0) {
                const int child = b.child[atom];
                cplx* cx = child >= 0 ? data.data() + blocks[child].offset : nullptr;
                const int ccols = child >= 0 ? blocks[child].cols : 0;
                for (int i = 0; i < b.rows; ++i) {
                    if (!(i & mr)) {
                        continue;
                    }
                    for (int j = 0; j < b.cols; ++j) {
                        if (!(j & mc)) {
                            continue;
                        }
                        const cplx v = x[i * b.cols + j];
                        x[(i ^ mr) * b.cols + (j ^ mc)] += to_qubit * v;
                        if (cx) {
                            cx[remove_bit(i, br) * ccols + remove_bit(j, bc)] += to_ground * v;
                        }
                    }
                }
            }
            for (int i = 0; i < b.rows; ++i) {
                const double fr = (i & mr) ? keep : 1.0;
                for (int j = 0; j < b.cols; ++j) {
                    const double f = fr * ((j & mc) ? keep : 1.0);
                    if (f != 1.0) {
                        x[i * b.cols + j] *= f;
                    }
                }
            }
        }
    }
}

void ChainEvolver::apply_kraus_adjoint(std::vector<cplx>& data) const {
    if (channel_.p <= 0.0) {
        return;
    }
    const double keep = std::sqrt(1.0 - channel_.p);
    const double to_qubit = channel_.p * channel_.to_qubit;
    const double to_ground = channel_.p * channel_.to_ground;
    const auto& blocks = layout_.blocks();
    for (int atom = basis_.n_atoms() - 1; atom >= 0; --atom) {
        for (const ChainBlock& b : blocks) {
            const int br = basis_.set(b.row_mask).bit_of(atom);
            const int bc = basis_.set(b.col_mask).bit_of(atom);
            if (br < 0 && bc < 0) {
                continue;
            }
            cplx* x = data.data() + b.offset;
            const int mr = br >= 0 ? 1 << br : 0;
            const int mc = bc >= 0 ? 1 << bc : 0;
            const bool both = br >= 0 && bc >= 0;
            const int child = both ? b.child[atom] : -1;
            const cplx* cx = child >= 0 ? data.data() + blocks[child].offset : nullptr;
            const int ccols = child >= 0 ? blocks[child].cols : 0;
            for (int i = 0; i < b.rows; ++i) {
                for (int j = 0; j < b.cols; ++j) {
                    const bool ri = i & mr;
                    const bool cj = j & mc;
                    cplx& v = x[i * b.cols + j];
                    if (both && ri && cj) {
                        v = (1.0 - channel_.p) * v + to_qubit * x[(i ^ mr) * b.cols + (j ^ mc)];
                        if (cx) {
                            v += to_ground * cx[remove_bit(i, br) * ccols + remove_bit(j, bc)];
                        }
                    } else if (ri || cj) {
                        v *= (ri && cj) ? 1.0 - channel_.p : keep;
                    }
                }
            }
        }
    }
}

double ChainEvolver::commutator_overlap(const std::vector<cplx>& adjoint,
                                        const std::vector<cplx>& state) const {
    // Re <adjoint, i [N_r, state]>
    double acc = 0.0;
    for (const ChainBlock& b : layout_.blocks()) {
        const auto& nr = basis_.set(b.row_mask).rydberg_count;
        const auto& nc = basis_.set(b.col_mask).rydberg_count;
        const cplx* m = adjoint.data() + b.offset;
        const cplx* x = state.data() + b.offset;
        for (int i = 0; i < b.rows; ++i) {
            for (int j = 0; j < b.cols; ++j) {
                const int d = nr[i] - nc[j];
                if (d != 0) {
                    const cplx mm = m[i * b.cols + j];
                    const cplx xx = x[i * b.cols + j];
                    acc -= d * (mm.real() * xx.imag() - mm.imag() * xx.real());
                }
            }
        }
    }
    return acc;
}

std::vector<cplx> ChainEvolver::run(std::span<const double> phases) const {
    if (static_cast<int>(phases.size()) != table_.segments()) {
        throw InvalidArgument("phase count does not match the prepared segments");
    }
    std::vector<cplx> x = initial_state();
    std::vector<cplx> y;
    std::vector<cplx> scratch;
    std::vector<std::vector<cplx>> u;
    for (int k = 0; k < table_.segments(); ++k) {
        step_unitaries(k, phases[k], u);
        apply_unitary(u, x, y, scratch);
        std::swap(x, y);
        apply_kraus(x);
    }
    return x;
}

double ChainEvolver::gradient(std::span<const double> phases, const std::vector<cplx>& seed,
                              std::span<double> grad, std::vector<cplx>* final_state) const {
    const int n = table_.segments();
    if (static_cast<int>(phases.size()) != n || static_cast<int>(grad.size()) < n) {
        throw InvalidArgument("phase/gradient size does not match the prepared segments");
    }
    if (seed.size() != layout_.data_size()) {
        throw InvalidArgument("adjoint seed does not match the chain layout");
    }
    std::vector<std::vector<cplx>> sigma(n);
    std::vector<cplx> x = initial_state();
    std::vector<cplx> scratch;
    std::vector<std::vector<cplx>> u;
    for (int k = 0; k < n; ++k) {
        step_unitaries(k, phases[k], u);
        apply_unitary(u, x, sigma[k], scratch);
        x = sigma[k];
        apply_kraus(x);
    }
    double objective = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        objective += seed[i].real() * x[i].real() + seed[i].imag() * x[i].imag();
    }
    if (final_state) {
        *final_state = x;
    }

    std::vector<cplx> lambda = seed;
    std::vector<cplx> m;
    std::vector<cplx> prev;
    for (int k = n - 1; k >= 0; --k) {
        m = lambda;
        apply_kraus_adjoint(m);
        double g = commutator_overlap(m, sigma[k]);
        step_unitaries(k, phases[k], u);
        apply_unitary_adjoint(u, m, lambda, scratch);
        if (k == 0) {
            prev = initial_state();
        } else {
            prev = sigma[k - 1];
            apply_kraus(prev);
        }
        g -= commutator_overlap(lambda, prev);
        grad[k] += g;
    }
    return objective;
}

Eigen::MatrixXcd ChainEvolver::superoperator(std::span<const double> phases) const {
    const HilbertSpace space(basis_.n_atoms());
    const auto dim = static_cast<Eigen::Index>(space.dim);
    if (static_cast<Eigen::Index>(layout_.origins().size()) != dim * dim) {
        throw InvalidArgument("superoperator needs one origin per matrix unit");
    }
    const std::vector<cplx> x = run(phases);
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(dim * dim, dim * dim);
    for (const ChainBlock& b : layout_.blocks()) {
        const ActiveSet& rs = basis_.set(b.row_mask);
        const ActiveSet& cs = basis_.set(b.col_mask);
        for (int i = 0; i < b.rows; ++i) {
            for (int j = 0; j < b.cols; ++j) {
                const Eigen::Index out = rs.global_index[i] + cs.global_index[j] * dim;
                s(out, b.origin) += x[b.offset + static_cast<std::size_t>(i) * b.cols + j];
            }
        }
    }
    return s;
}

namespace {

std::vector<Origin> comp_origins(int n_atoms) {
    const std::uint32_t d = 1u << n_atoms;
    std::vector<Origin> origins;
    for (std::uint32_t x = 0; x < d; ++x) {
        for (std::uint32_t y = x; y < d; ++y) {
            origins.push_back({x, y, 0, 0});
        }
    }
    return origins;
}

}  // namespace

CompChannelEngine::CompChannelEngine(int n_atoms, const KrausChannel& channel)
    : n_atoms_(n_atoms),
      channel_(channel),
      basis_(n_atoms),
      mixed_(channel.p > 0.0 ? comp_origins(n_atoms) : std::vector<Origin>{}, n_atoms, channel) {}

void CompChannelEngine::set_hamiltonian(const InteractionMatrix& interactions,
                                        std::span<const double> amplitudes, double dt_us) {
    if (channel_.p > 0.0) {
        mixed_.set_hamiltonian(interactions, amplitudes, dt_us);
    } else {
        table_ = PropagatorTable(basis_, interactions, amplitudes, dt_us);
    }
}

Eigen::MatrixXcd CompChannelEngine::assemble(const std::vector<cplx>& final_state) const {
    const int d = comp_dim();
    Eigen::MatrixXcd lambda = Eigen::MatrixXcd::Zero(d * d, d * d);
    const auto& layout = mixed_.layout();
    for (const ChainBlock& b : layout.blocks()) {
        const Origin& o = layout.origins()[b.origin];
        const cplx v = final_state[b.offset];
        lambda(b.row_mask * d + b.col_mask, o.row_mask * d + o.col_mask) = v;
        if (o.row_mask != o.col_mask) {
            lambda(b.col_mask * d + b.row_mask, o.col_mask * d + o.row_mask) = std::conj(v);
        }
    }
    return lambda;
}

std::vector<std::vector<cplx>> CompChannelEngine::pure_run(
    std::span<const double> phases, std::vector<std::vector<std::vector<cplx>>>* traj) const {
    const int n = table_.segments();
    if (static_cast<int>(phases.size()) != n) {
        throw InvalidArgument("phase count does not match the prepared segments");
    }
    const std::uint32_t masks = basis_.n_masks();
    std::vector<std::vector<cplx>> psi(masks);
    for (std::uint32_t mask = 0; mask < masks; ++mask) {
        psi[mask].assign(basis_.set(mask).size, cplx{});
        psi[mask][0] = 1.0;
    }
    if (traj) {
        traj->assign(n + 1, {});
        (*traj)[0] = psi;
    }
    std::vector<cplx> next;
    std::array<cplx, 2 * kMaxAtoms + 1> factor;
    for (int k = 0; k < n; ++k) {
        for (int d = -n_atoms_; d <= n_atoms_; ++d) {
            factor[d + n_atoms_] = std::polar(1.0, phases[k] * d);
        }
        for (std::uint32_t mask = 0; mask < masks; ++mask) {
            const ActiveSet& s = basis_.set(mask);
            const auto& w = table_.phase_free(k, mask);
            next.assign(s.size, cplx{});
            for (int r = 0; r < s.size; ++r) {
                cplx acc{};
                for (int c = 0; c < s.size; ++c) {
                    acc += factor[s.rydberg_count[r] - s.rydberg_count[c] + n_atoms_] *
                           w[static_cast<std::size_t>(r) * s.size + c] * psi[mask][c];
                }
                next[r] = acc;
            }
            psi[mask].swap(next);
        }
        if (traj) {
            (*traj)[k + 1] = psi;
        }
    }
    return psi;
}

Eigen::MatrixXcd CompChannelEngine::channel(std::span<const double> phases) const {
    const int d = comp_dim();
    if (channel_.p > 0.0) {
        return assemble(mixed_.run(phases));
    }
    const auto psi = pure_run(phases, nullptr);
    Eigen::MatrixXcd lambda = Eigen::MatrixXcd::Zero(d * d, d * d);
    for (int x = 0; x < d; ++x) {
        for (int y = 0; y < d; ++y) {
            lambda(x * d + y, x * d + y) = psi[x][0] * std::conj(psi[y][0]);
        }
    }
    return lambda;
}

double CompChannelEngine::gradient(std::span<const double> phases, const Eigen::MatrixXcd& weights,
                                   std::span<double> grad, Eigen::MatrixXcd* lambda) const {
    const int d = comp_dim();
    if (weights.rows() != d * d || weights.cols() != d * d) {
        throw InvalidArgument("weight matrix must be 4^n x 4^n");
    }
    if (channel_.p <= 0.0) {
        return pure_gradient(phases, weights, grad, lambda);
    }
    const auto& layout = mixed_.layout();
    std::vector<cplx> seed(layout.data_size(), cplx{});
    for (const ChainBlock& b : layout.blocks()) {
        const Origin& o = layout.origins()[b.origin];
        cplx g = weights(b.row_mask * d + b.col_mask, o.row_mask * d + o.col_mask);
        if (o.row_mask != o.col_mask) {
            g += std::conj(weights(b.col_mask * d + b.row_mask, o.col_mask * d + o.row_mask));
        }
        seed[b.offset] = std::conj(g);
    }
    std::vector<cplx> final_state;
    const double objective = mixed_.gradient(phases, seed, grad, lambda ? &final_state : nullptr);
    if (lambda) {
        *lambda = assemble(final_state);
    }
    return objective;
}

double CompChannelEngine::pure_gradient(std::span<const double> phases,
                                        const Eigen::MatrixXcd& weights, std::span<double> grad,
                                        Eigen::MatrixXcd* lambda) const {
    const int n = table_.segments();
    const int d = comp_dim();
    if (static_cast<int>(grad.size()) < n) {
        throw InvalidArgument("gradient buffer too small");
    }
    std::vector<std::vector<std::vector<cplx>>> traj;
    const auto psi = pure_run(phases, &traj);

    std::vector<cplx> u(d);
    for (int x = 0; x < d; ++x) {
        u[x] = psi[x][0];
    }
    double objective = 0.0;
    std::vector<cplx> w(d, cplx{});
    for (int x = 0; x < d; ++x) {
        for (int y = 0; y < d; ++y) {
            const cplx c = weights(x * d + y, x * d + y);
            objective += (c * u[x] * std::conj(u[y])).real();
            w[x] += (c + std::conj(weights(y * d + x, y * d + x))) * std::conj(u[y]);
        }
    }
    if (lambda) {
        *lambda = Eigen::MatrixXcd::Zero(d * d, d * d);
        for (int x = 0; x < d; ++x) {
            for (int y = 0; y < d; ++y) {
                (*lambda)(x * d + y, x * d + y) = u[x] * std::conj(u[y]);
            }
        }
    }

    // chi_j is the row vector with u = chi_j psi_j; q_j = sum_x w_x chi_j N psi_j.
    std::vector<std::vector<cplx>> chi(d);
    for (int x = 0; x < d; ++x) {
        chi[x].assign(basis_.set(x).size, cplx{});
        chi[x][0] = 1.0;
    }
    auto q_at = [&](int j) {
        cplx acc{};
        for (int x = 0; x < d; ++x) {
            const ActiveSet& s = basis_.set(x);
            cplx inner{};
            for (int l = 0; l < s.size; ++l) {
                inner += chi[x][l] * static_cast<double>(s.rydberg_count[l]) * traj[j][x][l];
            }
            acc += w[x] * inner;
        }
        return acc;
    };
    std::array<cplx, 2 * kMaxAtoms + 1> factor;
    std::vector<cplx> next;
    cplx q_next = q_at(n);
    for (int k = n - 1; k >= 0; --k) {
        for (int dd = -n_atoms_; dd <= n_atoms_; ++dd) {
            factor[dd + n_atoms_] = std::polar(1.0, phases[k] * dd);
        }
        for (int x = 0; x < d; ++x) {
            const ActiveSet& s = basis_.set(x);
            const auto& wk = table_.phase_free(k, x);
            next.assign(s.size, cplx{});
            for (int r = 0; r < s.size; ++r) {
                const cplx cr = chi[x][r];
                for (int c = 0; c < s.size; ++c) {
                    next[c] += cr * factor[s.rydberg_count[r] - s.rydberg_count[c] + n_atoms_] *
                               wk[static_cast<std::size_t>(r) * s.size + c];
                }
            }
            chi[x].swap(next);
        }
        const cplx q_here = q_at(k);
        // Re(i z) = -Im z
        grad[k] += -(q_next - q_here).imag();
        q_next = q_here;
    }
    return objective;
}

}  // namespace rydgate::engine
