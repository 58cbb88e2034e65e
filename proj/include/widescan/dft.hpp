#pragma once

#include "widescan/common.hpp"

namespace widescan {

// Unitary DFT pair (1/sqrt(n) on both directions):
//   X[b] = 1/sqrt(n) sum_l r[l] exp(-2 pi i b l / n)
//   r[l] = 1/sqrt(n) sum_b X[b] exp(+2 pi i b l / n)

/// n x n unitary inverse-DFT matrix; column b is the b-th inverse Fourier basis vector.
CMatrix inverse_dft_matrix(Index n);

CVector unitary_dft(const CVector& r);
CVector unitary_idft(const CVector& x);

}  // namespace widescan
