#include "widescan/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace widescan {

std::vector<double> design_weights(const std::vector<double>& kbar)
{
    require(!kbar.empty(), "design_weights: need at least one block");
    std::vector<double> inv(kbar.size());
    for (std::size_t i = 0; i < kbar.size(); ++i) {
        require(std::isfinite(kbar[i]), "design_weights: non-finite sparsity level");
        inv[i] = 1.0 / std::max(kbar[i], kSparsityFloor);
    }
    const double total = std::accumulate(inv.begin(), inv.end(), 0.0);
    for (auto& w : inv) {
        w /= total;
    }
    return inv;
}

RVector expand_weights(const BlockPartition& part, const std::vector<double>& weights)
{
    require(static_cast<Index>(weights.size()) == part.num_blocks(),
            "weights: expected " + std::to_string(part.num_blocks()) + " block weights, got " +
                std::to_string(weights.size()));
    RVector diag(part.n());
    for (Index i = 0; i < part.n(); ++i) {
        const double w = weights[static_cast<std::size_t>(part.block_of(i))];
        require(w > 0.0 && std::isfinite(w), "weights must be positive and finite");
        diag[i] = w;
    }
    return diag;
}

double noise_epsilon(double sigma, const ReductionMatrix& phi, double delta)
{
    require(sigma >= 0.0 && delta >= 0.0, "noise_epsilon: negative parameter");
    return (1.0 + delta) * sigma * phi.entries.norm();
}

double sigma_for_snr(const CVector& x, const ReductionMatrix& phi, double snr_db)
{
    require(!std::isnan(snr_db), "sigma_for_snr: SNR is NaN");
    if (std::isinf(snr_db) && snr_db > 0) {
        return 0.0;
    }
    const double frob2 = phi.entries.squaredNorm();
    require(frob2 > 0.0, "sigma_for_snr: zero reduction matrix");
    return std::sqrt(x.squaredNorm() / (std::pow(10.0, snr_db / 10.0) * frob2));
}

namespace {

// Euclidean projection onto {z : |Psi z - y| <= eps} through the thin SVD
// Psi = U S V^H. Writing z = V c + z_perp, only c is constrained:
// |S c - b|^2 + r0^2 <= eps^2 with b = U^H y and r0 the part of y outside
// range(Psi). The multiplier solves a secular equation by Newton's method.
class ResidualBallProjector {
public:
    ResidualBallProjector(const CMatrix& psi, const CVector& y, double eps)
    {
        Eigen::BDCSVD<CMatrix> svd(psi, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const RVector& sv = svd.singularValues();
        const double cutoff = sv.size() > 0
                                  ? sv[0] * static_cast<double>(std::max(psi.rows(), psi.cols())) *
                                        std::numeric_limits<double>::epsilon()
                                  : 0.0;
        Index rank = 0;
        while (rank < sv.size() && sv[rank] > cutoff) {
            ++rank;
        }
        u_ = svd.matrixU().leftCols(rank);
        v_ = svd.matrixV().leftCols(rank);
        s_ = sv.head(rank);
        b_ = u_.adjoint() * y;
        const double outside = std::max(y.squaredNorm() - b_.squaredNorm(), 0.0);
        feasible_ = eps * eps >= outside;
        radius_ = feasible_ ? std::sqrt(eps * eps - outside) : 0.0;
    }

    bool feasible() const { return feasible_; }

    CVector project(const CVector& a) const
    {
        const CVector ca = v_.adjoint() * a;
        const CVector d = s_.cast<Complex>().cwiseProduct(ca) - b_;
        const double dn = d.norm();
        if (dn <= radius_) {
            return a;
        }
        CVector c(ca.size());
        if (radius_ == 0.0) {
            for (Index i = 0; i < c.size(); ++i) {
                c[i] = b_[i] / s_[i];
            }
        } else {
            const double lambda = secular_root(d);
            for (Index i = 0; i < c.size(); ++i) {
                const double s2 = s_[i] * s_[i];
                c[i] = (ca[i] + lambda * s_[i] * b_[i]) / (1.0 + lambda * s2);
            }
        }
        return a + v_ * (c - ca);
    }

private:
    // Root of h(lambda) = |d ./ (1 + lambda s^2)| = radius. 1/h is concave and
    // increasing in lambda, so Newton on 1/h - 1/radius from 0 is monotone.
    double secular_root(const CVector& d) const
    {
        double lambda = 0.0;
        for (int it = 0; it < 200; ++it) {
            double h2 = 0.0;
            double dh2 = 0.0;  // d(h^2)/d(lambda)
            for (Index i = 0; i < d.size(); ++i) {
                const double s2 = s_[i] * s_[i];
                const double den = 1.0 + lambda * s2;
                const double q2 = std::norm(d[i]) / (den * den);
                h2 += q2;
                dh2 += -2.0 * q2 * s2 / den;
            }
            const double h = std::sqrt(h2);
            if (std::abs(h - radius_) <= 1e-13 * radius_) {
                break;
            }
            const double phi = 1.0 / h - 1.0 / radius_;
            const double dphi = -0.5 * dh2 / (h2 * h);
            const double step = phi / dphi;
            lambda -= step;
            if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
                lambda = 0.0;
                break;
            }
            if (std::abs(step) <= 1e-15 * std::max(lambda, 1.0)) {
                break;
            }
        }
        return lambda;
    }

    CMatrix u_;
    CMatrix v_;
    RVector s_;
    CVector b_;
    double radius_ = 0.0;
    bool feasible_ = true;
};

// Complex soft threshold: shrink magnitudes by t_i, keep phases.
void soft_threshold(const CVector& v, const RVector& t, CVector& out)
{
    out.resize(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v[i]);
        out[i] = mag > t[i] ? v[i] * ((mag - t[i]) / mag) : Complex{0.0, 0.0};
    }
}

RecoveryResult finish(const SensingMatrix& psi, const CVector& y, CVector z, int iterations,
                      bool converged, const Stopwatch& clock)
{
    RecoveryResult res;
    res.residual_norm = (psi.psi * z - y).norm();
    res.z_star = std::move(z);
    res.iterations = iterations;
    res.converged = converged;
    res.wall_time = clock.seconds();
    return res;
}

}  // namespace

RecoveryResult solve_weighted_l1(const SensingMatrix& psi, const CVector& y, double epsilon,
                                 const RVector& band_weights, const L1Options& opts)
{
    Stopwatch clock;
    const Index n = psi.n();
    require(y.size() == psi.m(), "l1 solver: measurement length does not match Psi rows");
    require(band_weights.size() == n, "l1 solver: need one weight per band");
    require(epsilon >= 0.0 && std::isfinite(epsilon), "l1 solver: epsilon must be >= 0");
    require(opts.tolerance > 0.0 && opts.max_iterations >= 1, "l1 solver: bad options");
    require((band_weights.array() > 0.0).all(), "l1 solver: weights must be positive");

    // The zero vector is feasible and l1-minimal.
    if (y.norm() <= epsilon) {
        return finish(psi, y, CVector::Zero(n), 0, true, clock);
    }

    // ADMM runs in the metric diag(sqrt(w)): with v = sqrt(w) .* z the problem is
    // min sum sqrt(w_i) |v_i| s.t. |Psi diag(1/sqrt(w)) v - y| <= eps. Uneven
    // weights otherwise slow the splitting down well below the unweighted pace.
    const RVector root_w = (band_weights / band_weights.mean()).cwiseSqrt();
    const RVector& weights = root_w;
    const CMatrix metric_psi = psi.psi * root_w.cwiseInverse().cast<Complex>().asDiagonal();
    const ResidualBallProjector proj(metric_psi, y, epsilon);
    const auto unscale = [&](CVector v) {
        return CVector(v.cwiseProduct(root_w.cwiseInverse().cast<Complex>()));
    };

    // ADMM on  min f(w) + I_C(z)  s.t.  z = w,  with scaled dual u.
    CVector z = proj.project(CVector::Zero(n));
    const double zmax = z.cwiseAbs().maxCoeff();
    if (zmax == 0.0) {
        return finish(psi, y, unscale(std::move(z)), 0, proj.feasible(), clock);
    }
    double rho = 1.0 / (0.1 * zmax);
    CVector w = z;
    CVector u = CVector::Zero(n);
    CVector w_old(n);
    CVector v(n);
    RVector thresh = weights / rho;

    bool converged = false;
    int it = 0;
    while (it < opts.max_iterations) {
        ++it;
        z = proj.project(w - u);
        w_old = w;
        v = z + u;
        soft_threshold(v, thresh, w);
        u += z - w;

        const double primal = (z - w).norm();
        const double change = (w - w_old).norm();
        const double scale = std::max({z.norm(), w.norm(), 1e-300});
        if (primal <= opts.tolerance * scale && change <= opts.tolerance * scale) {
            converged = true;
            break;
        }
        if (it % 10 == 0) {
            const double dual = rho * change;
            if (primal > 10.0 * dual) {
                rho *= 2.0;
                u /= 2.0;
                thresh = weights / rho;
            } else if (dual > 10.0 * primal) {
                rho /= 2.0;
                u *= 2.0;
                thresh = weights / rho;
            }
        }
    }
    return finish(psi, y, unscale(std::move(z)), it, converged && proj.feasible(), clock);
}

RecoveryResult solve_lasso(const RecoveryProblem& problem, const L1Options& opts)
{
    return solve_weighted_l1(problem.psi, problem.y, problem.epsilon,
                             RVector::Ones(problem.psi.n()), opts);
}

namespace {

const std::vector<double>& checked_weights(const RecoveryProblem& problem,
                                           const BlockPartition& part)
{
    require(problem.weights.has_value(), "weighted recovery: problem has no weights");
    const auto& w = *problem.weights;
    require(static_cast<Index>(w.size()) == part.num_blocks(),
            "weighted recovery: weight count does not match the partition");
    require(part.n() == problem.psi.n(), "weighted recovery: partition size does not match Psi");
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    require(std::abs(total - 1.0) <= 1e-9, "weighted recovery: weights must sum to 1");
    return w;
}

}  // namespace

RecoveryResult solve_wlasso(const RecoveryProblem& problem, const BlockPartition& part,
                            const L1Options& opts)
{
    const auto& w = checked_weights(problem, part);
    return solve_weighted_l1(problem.psi, problem.y, problem.epsilon, expand_weights(part, w),
                             opts);
}

RecoveryResult solve_wlasso_scaled(const RecoveryProblem& problem, const BlockPartition& part,
                                   const L1Options& opts)
{
    Stopwatch clock;
    const auto& w = checked_weights(problem, part);
    const RVector diag = expand_weights(part, w);
    const RVector inv = diag.cwiseInverse();
    SensingMatrix scaled = problem.psi;
    scaled.psi = problem.psi.psi * inv.cast<Complex>().asDiagonal();
    RecoveryResult res = solve_weighted_l1(scaled, problem.y, problem.epsilon,
                                           RVector::Ones(part.n()), opts);
    res.z_star = inv.cast<Complex>().cwiseProduct(res.z_star);
    res.residual_norm = (problem.psi.psi * res.z_star - problem.y).norm();
    res.wall_time = clock.seconds();
    return res;
}

RecoveryResult solve_bp(const SensingMatrix& psi, const CVector& y, const L1Options& opts)
{
    return solve_weighted_l1(psi, y, 1e-9 * y.norm(), RVector::Ones(psi.n()), opts);
}

namespace {

// Indices ordered by descending score; equal scores keep the lower index first.
std::vector<Index> top_indices(const RVector& score, Index count)
{
    std::vector<Index> idx(static_cast<std::size_t>(score.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    count = std::min<Index>(count, score.size());
    std::partial_sort(idx.begin(), idx.begin() + count, idx.end(), [&](Index a, Index b) {
        return score[a] > score[b] || (score[a] == score[b] && a < b);
    });
    idx.resize(static_cast<std::size_t>(count));
    return idx;
}

CMatrix columns(const CMatrix& psi, const std::vector<Index>& support)
{
    CMatrix sub(psi.rows(), static_cast<Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) {
        sub.col(static_cast<Index>(j)) = psi.col(support[j]);
    }
    return sub;
}

CVector least_squares(const CMatrix& psi, const std::vector<Index>& support, const CVector& y)
{
    if (support.empty()) {
        return CVector{};
    }
    return columns(psi, support).colPivHouseholderQr().solve(y);
}

CVector scatter(Index n, const std::vector<Index>& support, const CVector& coeffs)
{
    CVector z = CVector::Zero(n);
    for (std::size_t j = 0; j < support.size(); ++j) {
        z[support[j]] = coeffs[static_cast<Index>(j)];
    }
    return z;
}

std::vector<Index> merge_supports(const std::vector<Index>& keep, const std::vector<Index>& add,
                                  Index cap)
{
    std::vector<Index> merged = keep;
    for (Index j : add) {
        if (static_cast<Index>(merged.size()) >= cap) {
            break;
        }
        if (std::find(merged.begin(), merged.end(), j) == merged.end()) {
            merged.push_back(j);
        }
    }
    std::sort(merged.begin(), merged.end());
    return merged;
}

// Largest-magnitude `count` entries of coefficients on `support`.
std::vector<Index> prune(const std::vector<Index>& support, const CVector& coeffs, Index count)
{
    RVector mags = coeffs.cwiseAbs();
    const auto order = top_indices(mags, count);
    std::vector<Index> kept;
    kept.reserve(order.size());
    for (Index pos : order) {
        kept.push_back(support[static_cast<std::size_t>(pos)]);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace

RecoveryResult solve_omp(const SensingMatrix& psi, const CVector& y, Index k_max,
                         double residual_tol)
{
    Stopwatch clock;
    const Index m = psi.m();
    const Index n = psi.n();
    require(y.size() == m, "omp: measurement length does not match Psi rows");
    require(k_max >= 0 && k_max <= m, "omp: k_max must lie in [0, m]");
    require(residual_tol >= 0.0, "omp: residual_tol must be >= 0");

    RVector norms(n);
    for (Index j = 0; j < n; ++j) {
        norms[j] = psi.psi.col(j).norm();
    }
    std::vector<Index> support;
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    CVector coeffs;
    CVector r = y;
    int it = 0;
    while (static_cast<Index>(support.size()) < k_max && r.norm() > residual_tol) {
        const CVector corr = psi.psi.adjoint() * r;
        Index best = -1;
        double best_score = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (chosen[static_cast<std::size_t>(j)] || norms[j] == 0.0) {
                continue;
            }
            const double score = std::abs(corr[j]) / norms[j];
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        }
        if (best < 0) {
            break;
        }
        chosen[static_cast<std::size_t>(best)] = true;
        support.push_back(best);
        coeffs = least_squares(psi.psi, support, y);
        r = y - columns(psi.psi, support) * coeffs;
        ++it;
    }
    CVector z = support.empty() ? CVector::Zero(n) : scatter(n, support, coeffs);
    const bool converged = r.norm() <= residual_tol;
    return finish(psi, y, std::move(z), it, converged, clock);
}

RecoveryResult solve_cosamp(const SensingMatrix& psi, const CVector& y, Index k, int max_itr,
                            double residual_tol)
{
    Stopwatch clock;
    const Index m = psi.m();
    const Index n = psi.n();
    require(y.size() == m, "cosamp: measurement length does not match Psi rows");
    require(k >= 1 && k <= m, "cosamp: k must lie in [1, m]");
    require(max_itr >= 1, "cosamp: max_itr must be positive");

    if (y.norm() <= residual_tol || y.norm() == 0.0) {
        return finish(psi, y, CVector::Zero(n), 0, true, clock);
    }
    std::vector<Index> support;
    CVector a = CVector::Zero(n);
    CVector r = y;
    double rnorm = r.norm();
    bool converged = false;
    int it = 0;
    while (it < max_itr) {
        ++it;
        const RVector proxy = (psi.psi.adjoint() * r).cwiseAbs();
        const auto omega = top_indices(proxy, 2 * k);
        // LS needs at most m columns: keep the current support, then best proxies.
        const auto merged = merge_supports(support, omega, m);
        const CVector b = least_squares(psi.psi, merged, y);
        const auto pruned = prune(merged, b, k);
        CVector a_new = CVector::Zero(n);
        for (Index j : pruned) {
            const auto pos = std::find(merged.begin(), merged.end(), j) - merged.begin();
            a_new[j] = b[pos];
        }
        const CVector r_new = y - psi.psi * a_new;
        const double rnorm_new = r_new.norm();
        if (rnorm_new >= rnorm && !support.empty()) {
            converged = true;  // stagnated: keep the previous iterate
            break;
        }
        support = pruned;
        a = a_new;
        r = r_new;
        rnorm = rnorm_new;
        if (rnorm <= residual_tol) {
            converged = true;
            break;
        }
    }
    return finish(psi, y, std::move(a), it, converged, clock);
}

RecoveryResult solve_assamp(const SensingMatrix& psi, const CVector& y, Index initial_step,
                            double residual_tol, int max_itr)
{
    Stopwatch clock;
    const Index m = psi.m();
    const Index n = psi.n();
    require(y.size() == m, "as-samp: measurement length does not match Psi rows");
    require(initial_step >= 1, "as-samp: initial_step must be >= 1");
    require(max_itr >= 1, "as-samp: max_itr must be positive");
    require(residual_tol >= 0.0, "as-samp: residual_tol must be >= 0");

    if (y.norm() <= residual_tol || y.norm() == 0.0) {
        return finish(psi, y, CVector::Zero(n), 0, true, clock);
    }
    constexpr double kStagnation = 0.01;
    Index step = initial_step;
    Index size = std::min(step, m);
    std::vector<Index> support;
    CVector x = CVector::Zero(n);
    double rnorm = y.norm();
    CVector r = y;
    bool converged = false;
    int it = 0;
    while (it < max_itr) {
        ++it;
        const RVector proxy = (psi.psi.adjoint() * r).cwiseAbs();
        const auto candidates = merge_supports(support, top_indices(proxy, size), m);
        const CVector b = least_squares(psi.psi, candidates, y);
        const auto finalists = prune(candidates, b, size);
        const CVector coeffs = least_squares(psi.psi, finalists, y);
        const CVector r_new = y - columns(psi.psi, finalists) * coeffs;
        const double rnorm_new = r_new.norm();

        if (rnorm_new < rnorm) {
            const double gain = (rnorm - rnorm_new) / rnorm;
            support = finalists;
            x = scatter(n, finalists, coeffs);
            r = r_new;
            rnorm = rnorm_new;
            if (rnorm <= residual_tol) {
                converged = true;
                break;
            }
            if (gain >= kStagnation) {
                continue;
            }
        }
        // Stage switch: the current support size has stopped paying off.
        if (size >= m) {
            break;
        }
        size = std::min(size + step, m);
        step = std::max<Index>(1, step / 2);
    }
    return finish(psi, y, std::move(x), it, converged, clock);
}

std::vector<bool> decide_occupancy(const std::vector<CVector>& spectra, double threshold)
{
    require(!spectra.empty(), "decide_occupancy: need at least one window");
    require(threshold > 0.0, "decide_occupancy: threshold must be positive");
    const Index n = spectra.front().size();
    RVector energy = RVector::Zero(n);
    for (const auto& z : spectra) {
        require(z.size() == n, "decide_occupancy: windows differ in length");
        energy += z.cwiseAbs2();
    }
    std::vector<bool> occ(static_cast<std::size_t>(n));
    for (Index b = 0; b < n; ++b) {
        occ[static_cast<std::size_t>(b)] = energy[b] >= threshold;
    }
    return occ;
}

double calibrate_threshold(std::span<const double> noise_energies, double false_alarm_rate)
{
    require(!noise_energies.empty(), "calibrate_threshold: no calibration samples");
    require(false_alarm_rate > 0.0 && false_alarm_rate < 1.0,
            "calibrate_threshold: rate must lie in (0, 1)");
    std::vector<double> sorted(noise_energies.begin(), noise_energies.end());
    std::sort(sorted.begin(), sorted.end());
    const auto count = static_cast<double>(sorted.size());
    auto pos = static_cast<std::size_t>(std::ceil((1.0 - false_alarm_rate) * count));
    pos = std::min(pos, sorted.size() - 1);
    const double q = sorted[pos];
    // Strictly above the quantile sample; energies equal to it would otherwise alarm.
    return q > 0.0 ? std::nextafter(q, std::numeric_limits<double>::infinity())
                   : std::numeric_limits<double>::min();
}

std::vector<Index> support_of(const CVector& z, double rel_tol)
{
    std::vector<Index> s;
    if (z.size() == 0) {
        return s;
    }
    const double peak = z.cwiseAbs().maxCoeff();
    if (peak == 0.0) {
        return s;
    }
    for (Index i = 0; i < z.size(); ++i) {
        if (std::abs(z[i]) > rel_tol * peak) {
            s.push_back(i);
        }
    }
    return s;
}

double nmse(const CVector& z_star, const CVector& x)
{
    require(z_star.size() == x.size(), "nmse: length mismatch");
    const auto nnz = (x.array() != Complex{0.0, 0.0}).count();
    require(nnz > 0, "nmse: x must be non-zero");
    return (z_star - x).norm() / static_cast<double>(nnz);
}

double nmse_l2(const CVector& z_star, const CVector& x)
{
    require(z_star.size() == x.size(), "nmse_l2: length mismatch");
    const double xn = x.norm();
    require(xn > 0.0, "nmse_l2: x must be non-zero");
    return (z_star - x).norm() / xn;
}

double error_gain(double e_other, double e_wlasso)
{
    require(e_other > 0.0, "error_gain: reference error must be positive");
    return (e_other - e_wlasso) / e_other;
}

}  // namespace widescan
