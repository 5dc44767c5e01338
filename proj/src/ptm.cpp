#include "rydgate/ptm.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "rydgate/errors.hpp"

namespace rydgate {

namespace {

constexpr char kLetters[4] = {'I', 'X', 'Y', 'Z'};

void check_qubits(int n_qubits) {
    if (n_qubits < 1) {
        throw InvalidArgument("PTM needs at least one qubit");
    }
    if (n_qubits > 4) {
        throw UnsupportedSize("PTM supports at most 4 qubits");
    }
}

int pow4(int n) {
    return 1 << (2 * n);
}

// Letter code (0..3) of qubit q in Pauli index `index`.
int letter(int index, int q, int n) {
    return (index >> (2 * (n - 1 - q))) & 3;
}

std::vector<Eigen::MatrixXcd> all_paulis(int n) {
    std::vector<Eigen::MatrixXcd> out;
    out.reserve(pow4(n));
    for (int i = 0; i < pow4(n); ++i) {
        out.push_back(pauli_matrix(i, n));
    }
    return out;
}

// Register index of each computational basis state.
std::vector<int> computational_indices(int n) {
    std::vector<int> embed(1 << n);
    for (int x = 0; x < (1 << n); ++x) {
        int index = 0;
        for (int q = 0; q < n; ++q) {
            index = index * 3 + ((x >> (n - 1 - q)) & 1);
        }
        embed[x] = index;
    }
    return embed;
}

// R from a function giving <c|E(|a><b|)|d>.
template <typename Element>
PauliTransferMap ptm_from_elements(int n, Element element) {
    const int d = 1 << n;
    const auto paulis = all_paulis(n);
    // Cache E(|a><b|) restricted to the computational block.
    std::vector<Eigen::MatrixXcd> images(d * d, Eigen::MatrixXcd::Zero(d, d));
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            for (int c = 0; c < d; ++c) {
                for (int e = 0; e < d; ++e) {
                    images[a * d + b](c, e) = element(c, e, a, b);
                }
            }
        }
    }
    PauliTransferMap ptm{n, Eigen::MatrixXd::Zero(pow4(n), pow4(n))};
    for (int j = 0; j < pow4(n); ++j) {
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b) {
                if (paulis[j](a, b) != cplx{}) {
                    out += paulis[j](a, b) * images[a * d + b];
                }
            }
        }
        for (int i = 0; i < pow4(n); ++i) {
            ptm.r(i, j) = (paulis[i] * out).trace().real() / d;
        }
    }
    return ptm;
}

int ideal_image(const PauliTransferMap& ideal, int column) {
    Eigen::Index row = 0;
    ideal.r.col(column).cwiseAbs().maxCoeff(&row);
    return static_cast<int>(row);
}

std::string classify(int output, int image, int n) {
    bool any = false;
    bool xy = true;
    bool zi = true;
    for (int q = 0; q < n; ++q) {
        const int a = letter(output, q, n);
        const int b = letter(image, q, n);
        if (a == b) {
            continue;
        }
        any = true;
        const bool a_xy = a == 1 || a == 2;
        const bool b_xy = b == 1 || b == 2;
        xy = xy && a_xy && b_xy;
        zi = zi && !a_xy && !b_xy;
    }
    if (!any) {
        return "diagonal";
    }
    if (xy) {
        return "X<->Y";
    }
    if (zi) {
        return "Z<->I";
    }
    return "other";
}

}  // namespace

std::string pauli_label(int index, int n_qubits) {
    if (index < 0 || index >= pow4(n_qubits)) {
        throw InvalidArgument("Pauli index out of range");
    }
    std::string s(n_qubits, 'I');
    for (int q = 0; q < n_qubits; ++q) {
        s[q] = kLetters[letter(index, q, n_qubits)];
    }
    return s;
}

int pauli_index(const std::string& label) {
    int index = 0;
    for (char c : label) {
        const char* pos = std::find(kLetters, kLetters + 4, c);
        if (pos == kLetters + 4) {
            throw InvalidArgument("invalid Pauli label '" + label + "'");
        }
        index = index * 4 + static_cast<int>(pos - kLetters);
    }
    return index;
}

Eigen::MatrixXcd pauli_matrix(int index, int n_qubits) {
    const std::array<Eigen::Matrix2cd, 4> single = [] {
        std::array<Eigen::Matrix2cd, 4> p;
        p[0] << 1, 0, 0, 1;
        p[1] << 0, 1, 1, 0;
        p[2] << 0, cplx(0, -1), cplx(0, 1), 0;
        p[3] << 1, 0, 0, -1;
        return p;
    }();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Ones(1, 1);
    for (int q = 0; q < n_qubits; ++q) {
        const Eigen::Matrix2cd& s = single[letter(index, q, n_qubits)];
        Eigen::MatrixXcd kron(m.rows() * 2, m.cols() * 2);
        for (int r = 0; r < m.rows(); ++r) {
            for (int c = 0; c < m.cols(); ++c) {
                kron.block(2 * r, 2 * c, 2, 2) = m(r, c) * s;
            }
        }
        m = std::move(kron);
    }
    return m;
}

PauliTransferMap compute_ptm(const Superoperator& channel, int n_qubits) {
    check_qubits(n_qubits);
    const HilbertSpace space(n_qubits);
    if (channel.dim != space.dim || channel.matrix.rows() != space.dim * space.dim ||
        channel.matrix.cols() != space.dim * space.dim) {
        throw InvalidArgument("channel dimension does not match 3^" + std::to_string(n_qubits));
    }
    const std::vector<int> embed = computational_indices(n_qubits);
    const int dim = space.dim;
    return ptm_from_elements(n_qubits, [&](int c, int e, int a, int b) {
        return channel.matrix(embed[c] + embed[e] * dim, embed[a] + embed[b] * dim);
    });
}

PauliTransferMap compute_ptm_unitary(const Eigen::MatrixXcd& unitary, int n_qubits) {
    check_qubits(n_qubits);
    const HilbertSpace space(n_qubits);
    if (unitary.rows() != space.dim || unitary.cols() != space.dim) {
        throw InvalidArgument("unitary dimension does not match 3^" + std::to_string(n_qubits));
    }
    const std::vector<int> embed = computational_indices(n_qubits);
    return ptm_from_elements(n_qubits, [&](int c, int e, int a, int b) {
        return unitary(embed[c], embed[a]) * std::conj(unitary(embed[e], embed[b]));
    });
}

PauliTransferMap ptm_from_comp_channel(const Eigen::MatrixXcd& lambda, int n_qubits) {
    check_qubits(n_qubits);
    const int d = 1 << n_qubits;
    if (lambda.rows() != d * d || lambda.cols() != d * d) {
        throw InvalidArgument("computational channel has the wrong dimension");
    }
    return ptm_from_elements(n_qubits, [&](int c, int e, int a, int b) {
        return lambda(c * d + e, a * d + b);
    });
}

Eigen::MatrixXcd ideal_comp_channel(const GateTarget& gate) {
    gate.validate();
    const int n = gate.n_atoms();
    check_qubits(n);
    const int d = 1 << n;
    Eigen::MatrixXcd lambda = Eigen::MatrixXcd::Zero(d * d, d * d);
    for (int c = 0; c < d; ++c) {
        for (int e = 0; e < d; ++e) {
            lambda(c * d + e, c * d + e) = gate.diagonal(c) * std::conj(gate.diagonal(e));
        }
    }
    return lambda;
}

Eigen::MatrixXcd undo_compensation(const Eigen::MatrixXcd& lambda,
                                   const std::vector<double>& theta) {
    const int n = static_cast<int>(theta.size());
    const int d = 1 << n;
    if (lambda.rows() != d * d) {
        throw InvalidArgument("compensation vector does not match the channel");
    }
    std::vector<double> phase(d, 0.0);
    for (int x = 0; x < d; ++x) {
        for (int j = 0; j < n; ++j) {
            phase[x] += theta[j] * ((x >> (n - 1 - j)) & 1);
        }
    }
    Eigen::MatrixXcd out = lambda;
    for (int c = 0; c < d; ++c) {
        for (int e = 0; e < d; ++e) {
            out.row(c * d + e) *= std::polar(1.0, phase[e] - phase[c]);
        }
    }
    return out;
}

PauliTransferMap ideal_ptm(const GateTarget& gate) {
    gate.validate();
    if (gate.n_targets > 3) {
        throw UnsupportedSize("ideal PTM supports at most 3 targets");
    }
    const int n = gate.n_atoms();
    const int d = 1 << n;
    Eigen::VectorXcd diag(d);
    for (int x = 0; x < d; ++x) {
        diag(x) = gate.diagonal(x);
    }
    return ptm_from_elements(n, [&](int c, int e, int a, int b) {
        return (c == a && e == b) ? diag(a) * std::conj(diag(b)) : cplx{};
    });
}

PauliTransferMap average_ptm(const std::vector<PauliTransferMap>& maps) {
    if (maps.empty()) {
        throw InvalidArgument("no PTMs to average");
    }
    PauliTransferMap out{maps.front().n_qubits, Eigen::MatrixXd::Zero(maps.front().size(),
                                                                      maps.front().size())};
    for (const auto& m : maps) {
        if (m.size() != out.size()) {
            throw InvalidArgument("PTM sizes differ");
        }
        out.r += m.r;
    }
    out.r /= static_cast<double>(maps.size());
    return out;
}

std::vector<ErrorChannel> rank_error_channels(const PauliTransferMap& real,
                                              const PauliTransferMap& ideal, double threshold) {
    if (real.size() != ideal.size() || real.n_qubits != ideal.n_qubits) {
        throw InvalidArgument("PTM dimensions differ");
    }
    const int n = real.n_qubits;
    std::vector<ErrorChannel> out;
    for (int j = 0; j < real.size(); ++j) {
        const int image = ideal_image(ideal, j);
        for (int i = 0; i < real.size(); ++i) {
            const double m = std::abs(real.r(i, j) - ideal.r(i, j));
            if (m > threshold) {
                out.push_back({j, i, pauli_label(j, n), pauli_label(i, n), m,
                               classify(i, image, n)});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const ErrorChannel& a, const ErrorChannel& b) {
        const double scale = std::max(a.magnitude, b.magnitude);
        if (std::abs(a.magnitude - b.magnitude) > 1e-9 * scale) {
            return a.magnitude > b.magnitude;
        }
        return std::tie(a.input, a.output) < std::tie(b.input, b.output);
    });
    return out;
}

void write_ptm_csv(std::ostream& out, const PauliTransferMap& ptm) {
    const int n = ptm.n_qubits;
    out << "output\\input";
    for (int j = 0; j < ptm.size(); ++j) {
        out << ',' << pauli_label(j, n);
    }
    out << '\n';
    out << std::setprecision(17);
    for (int i = 0; i < ptm.size(); ++i) {
        out << pauli_label(i, n);
        for (int j = 0; j < ptm.size(); ++j) {
            out << ',' << ptm.r(i, j);
        }
        out << '\n';
    }
}

PauliTransferMap read_ptm_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw InvalidArgument("empty PTM file");
    }
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        while (std::getline(ss, cell, ',')) {
            header.push_back(cell);
        }
    }
    if (header.empty()) {
        throw InvalidArgument("PTM header has no columns");
    }
    const int size = static_cast<int>(header.size());
    const int n = static_cast<int>(header.front().size());
    if (pow4(n) != size) {
        throw InvalidArgument("PTM header size does not match its labels");
    }
    PauliTransferMap ptm{n, Eigen::MatrixXd::Zero(size, size)};
    for (int i = 0; i < size; ++i) {
        if (!std::getline(in, line)) {
            throw InvalidArgument("PTM file truncated at row " + std::to_string(i));
        }
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        if (pauli_index(cell) != i) {
            throw InvalidArgument("unexpected PTM row label '" + cell + "'");
        }
        for (int j = 0; j < size; ++j) {
            if (!std::getline(ss, cell, ',')) {
                throw InvalidArgument("PTM row " + std::to_string(i) + " is short");
            }
            ptm.r(i, j) = std::stod(cell);
        }
    }
    return ptm;
}

void write_ranking_csv(std::ostream& out, const std::vector<ErrorChannel>& ranking) {
    out << "rank,input,output,magnitude,class\n" << std::setprecision(17);
    int rank = 1;
    for (const auto& e : ranking) {
        out << rank++ << ',' << e.input_label << ',' << e.output_label << ',' << e.magnitude << ','
            << e.channel_class << '\n';
    }
}

void write_ptm_svg(std::ostream& out, const PauliTransferMap& ptm, const std::string& title,
                   double floor) {
    const int size = ptm.size();
    const int cell = size > 64 ? 4 : (size > 16 ? 10 : 24);
    const int margin = 40;
    const int width = margin + size * cell + 10;
    const int height = margin + size * cell + 10;
    const double lo = std::log10(floor);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<text x=\"" << margin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">"
        << title << " (log10 |R|)</text>\n";
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const double v = std::abs(ptm.r(i, j));
            const double t = v <= floor ? 0.0 : std::clamp((std::log10(v) - lo) / -lo, 0.0, 1.0);
            const int shade = static_cast<int>(255.0 * (1.0 - t));
            const int red = ptm.r(i, j) < 0.0 ? 255 : shade;
            const int blue = ptm.r(i, j) < 0.0 ? shade : 255;
            out << "<rect x=\"" << margin + j * cell << "\" y=\"" << margin + i * cell
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << red
                << ',' << shade << ',' << blue << ")\"/>\n";
        }
    }
    out << "</svg>\n";
}

}  // namespace rydgate
