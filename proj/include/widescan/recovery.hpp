#pragma once

#include "widescan/common.hpp"
#include "widescan/measurement.hpp"
#include "widescan/spectrum.hpp"

#include <optional>
#include <span>
#include <vector>

namespace widescan {

/// Inputs of the constrained l1 problems
///   minimize sum_j w_j |z_{G_j}|_1  subject to  |Psi z - y|_2 <= epsilon.
struct RecoveryProblem {
    SensingMatrix psi;
    CVector y;
    double epsilon = 0.0;
    std::optional<std::vector<double>> weights;  // one per block, positive, summing to 1
};

struct RecoveryResult {
    CVector z_star;
    double residual_norm = 0.0;
    int iterations = 0;
    double wall_time = 0.0;  // seconds
    bool converged = false;
};

/// Operator-splitting settings shared by LASSO, WLASSO and BP.
struct L1Options {
    double tolerance = 1e-6;  // relative iterate change
    int max_iterations = 5000;
};

/// Smallest kbar used in weight design; empty blocks would otherwise get infinite weight.
constexpr double kSparsityFloor = 0.1;

/// w_i = (1/kbar_i) / sum_j (1/kbar_j), kbar floored at kSparsityFloor.
std::vector<double> design_weights(const std::vector<double>& kbar);

/// Diagonal of W: w_1 repeated n_1 times, ..., w_g repeated n_g times.
RVector expand_weights(const BlockPartition& part, const std::vector<double>& weights);

/// Expected-noise-norm radius (1 + delta) * sigma * |Phi|_F, i.e. sqrt(E|Phi w|^2) inflated.
double noise_epsilon(double sigma, const ReductionMatrix& phi, double delta = 0.1);

/// Time-domain sigma giving E|Phi w|^2 = |x|^2 / 10^(snr_db/10); 0 for infinite SNR.
double sigma_for_snr(const CVector& x, const ReductionMatrix& phi, double snr_db);

/// Per-band weighted l1 with a residual ball constraint. The objective is
/// normalized by the mean weight, so scaling all weights leaves the path unchanged.
/// Complex data is handled natively: |z_i| is the complex modulus.
RecoveryResult solve_weighted_l1(const SensingMatrix& psi, const CVector& y, double epsilon,
                                 const RVector& band_weights, const L1Options& opts = {});

RecoveryResult solve_lasso(const RecoveryProblem& problem, const L1Options& opts = {});
RecoveryResult solve_wlasso(const RecoveryProblem& problem, const BlockPartition& part,
                            const L1Options& opts = {});

/// Plain LASSO on the column-scaled matrix Psi W^-1, mapped back by x = W^-1 z'.
RecoveryResult solve_wlasso_scaled(const RecoveryProblem& problem, const BlockPartition& part,
                                   const L1Options& opts = {});

/// Basis pursuit: LASSO with epsilon = 1e-9 |y|.
RecoveryResult solve_bp(const SensingMatrix& psi, const CVector& y, const L1Options& opts = {});

RecoveryResult solve_omp(const SensingMatrix& psi, const CVector& y, Index k_max,
                         double residual_tol);

RecoveryResult solve_cosamp(const SensingMatrix& psi, const CVector& y, Index k, int max_itr,
                            double residual_tol = 0.0);

/// Sparsity-adaptive matching pursuit with an adaptive step: the support
/// estimate grows by `step` whenever an iteration improves the residual by
/// less than 1%, and the step halves (floor 1) at every such stage switch.
RecoveryResult solve_assamp(const SensingMatrix& psi, const CVector& y, Index initial_step,
                            double residual_tol, int max_itr);

/// Band b occupied iff sum_t |z_b[t]|^2 >= threshold.
std::vector<bool> decide_occupancy(const std::vector<CVector>& spectra, double threshold);

/// Threshold giving the requested false-alarm rate on noise-only band energies
/// (empirical (1 - rate) quantile, kept strictly positive).
double calibrate_threshold(std::span<const double> noise_energies, double false_alarm_rate);

/// Indices with |z_i| > rel_tol * max_j |z_j|.
std::vector<Index> support_of(const CVector& z, double rel_tol = 1e-3);

/// |z - x|_2 / |x|_0 (primary figure metric).
double nmse(const CVector& z_star, const CVector& x);
/// |z - x|_2 / |x|_2.
double nmse_l2(const CVector& z_star, const CVector& x);
/// (e_other - e_wlasso) / e_other.
double error_gain(double e_other, double e_wlasso);

}  // namespace widescan
