#include "widescan/dft.hpp"

#include <numbers>
#include <vector>

namespace widescan {

namespace {

// Twiddles exp(sign * 2 pi i k / n) for k = 0..n-1, indexed by (b*l) mod n
// so that large products stay exact.
std::vector<Complex> twiddles(Index n, double sign)
{
    std::vector<Complex> w(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
        const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                             static_cast<double>(n);
        w[static_cast<std::size_t>(k)] = {std::cos(angle), std::sin(angle)};
    }
    return w;
}

CVector transform(const CVector& in, double sign)
{
    const Index n = in.size();
    CVector out = CVector::Zero(n);
    if (n == 0) {
        return out;
    }
    const auto w = twiddles(n, sign);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (Index b = 0; b < n; ++b) {
        Complex acc{0.0, 0.0};
        for (Index l = 0; l < n; ++l) {
            acc += in[l] * w[static_cast<std::size_t>((b * l) % n)];
        }
        out[b] = acc * scale;
    }
    return out;
}

}  // namespace

CMatrix inverse_dft_matrix(Index n)
{
    require(n >= 1, "inverse_dft_matrix: n must be positive");
    const auto w = twiddles(n, +1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    CMatrix f(n, n);
    for (Index l = 0; l < n; ++l) {
        for (Index b = 0; b < n; ++b) {
            f(l, b) = w[static_cast<std::size_t>((b * l) % n)] * scale;
        }
    }
    return f;
}

CVector unitary_dft(const CVector& r) { return transform(r, -1.0); }

CVector unitary_idft(const CVector& x) { return transform(x, +1.0); }

}  // namespace widescan
