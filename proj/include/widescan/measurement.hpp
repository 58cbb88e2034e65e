#pragma once

#include "widescan/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace widescan {

enum class MatrixKind { gaussian, bernoulli, circulant };

std::string to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& name);

/// The m x n real map from Nyquist samples to sub-Nyquist measurements.
struct ReductionMatrix {
    MatrixKind kind = MatrixKind::gaussian;
    RMatrix entries;
    std::uint64_t seed = 0;
    Index stride = 0;  // circulant only: row shift between consecutive rows

    Index m() const { return entries.rows(); }
    Index n() const { return entries.cols(); }
};

/// Kind-specific construction, all with unit expected column energy:
///   gaussian   N(0, 1/m) i.i.d.
///   bernoulli  +-1/sqrt(m) equiprobable, pairwise distinct rows
///   circulant  a +-1/sqrt(m) base row cyclically shifted by floor(n/m) per row
ReductionMatrix build_reduction(MatrixKind kind, Index m, Index n, std::uint64_t seed);

/// Psi = Phi * F^-1 acting on the frequency-domain vector.
struct SensingMatrix {
    CMatrix psi;
    std::optional<MatrixKind> kind;  // empty for hand-built matrices
    std::uint64_t seed = 0;

    Index m() const { return psi.rows(); }
    Index n() const { return psi.cols(); }
};

SensingMatrix compose_sensing(const ReductionMatrix& phi);
SensingMatrix sensing_from(CMatrix psi);

/// y = Phi r.
CVector measure(const ReductionMatrix& phi, const CVector& r);

/// m-branch PN mixing front end; branch i mixes with its own +-1 sequence.
struct AfeBank {
    std::vector<std::vector<std::int8_t>> pn_sequences;
    std::uint64_t seed = 0;

    Index branches() const { return static_cast<Index>(pn_sequences.size()); }
    Index length() const
    {
        return pn_sequences.empty() ? 0 : static_cast<Index>(pn_sequences.front().size());
    }
};

/// Draws the same +-1 sequences a bernoulli reduction with this (m, n, seed) uses.
AfeBank make_pn_bank(Index m, Index n, std::uint64_t seed);

/// Rows of the bank scaled by 1/sqrt(m), as a bernoulli reduction matrix.
ReductionMatrix bank_to_reduction(const AfeBank& bank);

/// Branch i: mix r pointwise with its PN sequence, low-pass by integrate-and-dump
/// over the window, one sample per branch: (1/sqrt(m)) sum_l pn_i[l] r[l].
CVector afe_measure(const AfeBank& bank, const CVector& r);

/// Max normalized inner product between distinct columns.
double coherence(const SensingMatrix& psi);

// Plain-text matrix files: one header line
//   # widescan-reduction kind=<kind> m=<m> n=<n> seed=<seed> stride=<stride>
// followed by m comma-separated rows in row-major order (shortest round-trip decimals).
void save_reduction_csv(const ReductionMatrix& phi, const std::filesystem::path& path);
ReductionMatrix load_reduction_csv(const std::filesystem::path& path);

}  // namespace widescan
