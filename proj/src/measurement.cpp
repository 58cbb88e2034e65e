#include "widescan/measurement.hpp"

#include "widescan/dft.hpp"
#include "widescan/text.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace widescan {

std::string to_string(MatrixKind kind)
{
    switch (kind) {
    case MatrixKind::gaussian:
        return "gaussian";
    case MatrixKind::bernoulli:
        return "bernoulli";
    case MatrixKind::circulant:
        return "circulant";
    }
    return "unknown";
}

MatrixKind matrix_kind_from_string(const std::string& name)
{
    if (name == "gaussian") {
        return MatrixKind::gaussian;
    }
    if (name == "bernoulli") {
        return MatrixKind::bernoulli;
    }
    if (name == "circulant") {
        return MatrixKind::circulant;
    }
    throw InvalidArgument("unknown matrix kind '" + name + "'");
}

namespace {

using PnRow = std::vector<std::int8_t>;

PnRow draw_pn_row(Index n, Rng& rng)
{
    std::bernoulli_distribution coin(0.5);
    PnRow row(static_cast<std::size_t>(n));
    for (auto& v : row) {
        v = coin(rng) ? 1 : -1;
    }
    return row;
}

// m pairwise distinct +-1 rows. A duplicate is redrawn from the continuing
// stream, which is only possible while 2^n > rows drawn so far.
std::vector<PnRow> draw_pn_rows(Index m, Index n, Rng& rng)
{
    const bool can_dedupe = n >= 63 || (Index{1} << n) >= m;
    std::set<PnRow> seen;
    std::vector<PnRow> rows;
    rows.reserve(static_cast<std::size_t>(m));
    while (static_cast<Index>(rows.size()) < m) {
        auto row = draw_pn_row(n, rng);
        if (can_dedupe && !seen.insert(row).second) {
            continue;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

ReductionMatrix build_reduction(MatrixKind kind, Index m, Index n, std::uint64_t seed)
{
    require(m >= 1 && n >= 1, "build_reduction: m and n must be positive");
    require(m <= n, "build_reduction: m = " + std::to_string(m) + " exceeds n = " +
                        std::to_string(n));
    ReductionMatrix phi;
    phi.kind = kind;
    phi.seed = seed;
    phi.entries.resize(m, n);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));

    switch (kind) {
    case MatrixKind::gaussian: {
        std::normal_distribution<double> nd(0.0, scale);
        for (Index i = 0; i < m; ++i) {
            for (Index j = 0; j < n; ++j) {
                phi.entries(i, j) = nd(rng);
            }
        }
        break;
    }
    case MatrixKind::bernoulli: {
        const auto rows = draw_pn_rows(m, n, rng);
        for (Index i = 0; i < m; ++i) {
            for (Index j = 0; j < n; ++j) {
                phi.entries(i, j) = scale * rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
        }
        break;
    }
    case MatrixKind::circulant: {
        const auto base = draw_pn_row(n, rng);
        phi.stride = n / m;
        for (Index i = 0; i < m; ++i) {
            const Index shift = i * phi.stride;
            for (Index j = 0; j < n; ++j) {
                const Index src = ((j - shift) % n + n) % n;
                phi.entries(i, j) = scale * base[static_cast<std::size_t>(src)];
            }
        }
        break;
    }
    }
    return phi;
}

SensingMatrix compose_sensing(const ReductionMatrix& phi)
{
    SensingMatrix s;
    s.psi = phi.entries.cast<Complex>() * inverse_dft_matrix(phi.n());
    s.kind = phi.kind;
    s.seed = phi.seed;
    return s;
}

SensingMatrix sensing_from(CMatrix psi)
{
    SensingMatrix s;
    s.psi = std::move(psi);
    return s;
}

CVector measure(const ReductionMatrix& phi, const CVector& r)
{
    require(r.size() == phi.n(), "measure: signal length " + std::to_string(r.size()) +
                                     " does not match n = " + std::to_string(phi.n()));
    return phi.entries.cast<Complex>() * r;
}

AfeBank make_pn_bank(Index m, Index n, std::uint64_t seed)
{
    require(m >= 1 && n >= 1 && m <= n, "make_pn_bank: need 1 <= m <= n");
    Rng rng(seed);
    AfeBank bank;
    bank.seed = seed;
    bank.pn_sequences = draw_pn_rows(m, n, rng);
    return bank;
}

ReductionMatrix bank_to_reduction(const AfeBank& bank)
{
    const Index m = bank.branches();
    const Index n = bank.length();
    require(m >= 1, "bank_to_reduction: empty bank");
    ReductionMatrix phi;
    phi.kind = MatrixKind::bernoulli;
    phi.seed = bank.seed;
    phi.entries.resize(m, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
            phi.entries(i, j) = scale * bank.pn_sequences[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return phi;
}

CVector afe_measure(const AfeBank& bank, const CVector& r)
{
    const Index m = bank.branches();
    require(m >= 1, "afe_measure: empty bank");
    require(r.size() == bank.length(), "afe_measure: signal length does not match PN length");
    const double gain = 1.0 / std::sqrt(static_cast<double>(m));
    CVector y(m);
    CVector mixed(r.size());
    for (Index i = 0; i < m; ++i) {
        const auto& pn = bank.pn_sequences[static_cast<std::size_t>(i)];
        for (Index l = 0; l < r.size(); ++l) {
            mixed[l] = r[l] * static_cast<double>(pn[static_cast<std::size_t>(l)]);
        }
        // integrate-and-dump low-pass: one output sample per window
        Complex acc{0.0, 0.0};
        for (Index l = 0; l < r.size(); ++l) {
            acc += mixed[l];
        }
        y[i] = gain * acc;
    }
    return y;
}

double coherence(const SensingMatrix& s)
{
    const Index n = s.n();
    require(n >= 2, "coherence: need at least two columns");
    RVector norms(n);
    for (Index j = 0; j < n; ++j) {
        norms[j] = s.psi.col(j).norm();
        require(norms[j] > 0.0, "coherence: column " + std::to_string(j) + " is zero");
    }
    const CMatrix gram = s.psi.adjoint() * s.psi;
    double mu = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            mu = std::max(mu, std::abs(gram(i, j)) / (norms[i] * norms[j]));
        }
    }
    return std::min(mu, 1.0);
}

void save_reduction_csv(const ReductionMatrix& phi, const std::filesystem::path& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot open '" + path.string() + "' for writing");
    out << "# widescan-reduction kind=" << to_string(phi.kind) << " m=" << phi.m()
        << " n=" << phi.n() << " seed=" << phi.seed << " stride=" << phi.stride << "\n";
    for (Index i = 0; i < phi.m(); ++i) {
        for (Index j = 0; j < phi.n(); ++j) {
            if (j > 0) {
                out << ',';
            }
            out << format_double(phi.entries(i, j));
        }
        out << '\n';
    }
    require(static_cast<bool>(out), "write to '" + path.string() + "' failed");
}

ReductionMatrix load_reduction_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open '" + path.string() + "'");
    std::string header;
    std::getline(in, header);
    const std::string tag = "# widescan-reduction";
    require(header.rfind(tag, 0) == 0, "load_reduction_csv: missing header line");

    std::map<std::string, std::string> fields;
    std::istringstream hs(header.substr(tag.size()));
    std::string tok;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        require(eq != std::string::npos, "load_reduction_csv: malformed header field '" + tok + "'");
        fields[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    for (const char* key : {"kind", "m", "n", "seed", "stride"}) {
        require(fields.count(key) == 1, std::string("load_reduction_csv: header lacks ") + key);
    }
    ReductionMatrix phi;
    phi.kind = matrix_kind_from_string(fields["kind"]);
    const Index m = parse_int(fields["m"]);
    const Index n = parse_int(fields["n"]);
    phi.seed = std::stoull(fields["seed"]);
    phi.stride = parse_int(fields["stride"]);
    require(m >= 1 && n >= 1, "load_reduction_csv: bad dimensions");
    phi.entries.resize(m, n);

    std::string line;
    for (Index i = 0; i < m; ++i) {
        require(static_cast<bool>(std::getline(in, line)), "load_reduction_csv: too few rows");
        const auto cells = split(line, ',');
        require(static_cast<Index>(cells.size()) == n, "load_reduction_csv: row " +
                                                           std::to_string(i) + " has wrong length");
        for (Index j = 0; j < n; ++j) {
            phi.entries(i, j) = parse_double(cells[static_cast<std::size_t>(j)]);
        }
    }
    return phi;
}

}  // namespace widescan
