#pragma once

#include "widescan/common.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace widescan {

/// Realized occupied-band counts k_j[t] per block and window.
class OccupancyHistory {
public:
    explicit OccupancyHistory(std::vector<Index> block_sizes, double window_seconds = 1.0);

    /// Appends one window: one count per block, each in [0, n_j].
    void append(const std::vector<double>& counts);

    Index num_blocks() const { return static_cast<Index>(block_sizes_.size()); }
    Index length() const { return series_.empty() ? 0 : static_cast<Index>(series_.front().size()); }
    const std::vector<Index>& block_sizes() const { return block_sizes_; }
    double window_seconds() const { return window_seconds_; }
    const std::vector<double>& series(Index block) const { return series_[static_cast<std::size_t>(block)]; }

    /// The last L values of every block, oldest first.
    std::vector<std::vector<double>> recent(Index lag) const;

    /// Windows [0, count), as a new history.
    OccupancyHistory head(Index count) const;

private:
    std::vector<Index> block_sizes_;
    double window_seconds_;
    std::vector<std::vector<double>> series_;
};

// CSV with header `t,block,k`; t counts windows from 1, blocks from 0.
void save_history_csv(const OccupancyHistory& h, const std::filesystem::path& path);
OccupancyHistory load_history_csv(const std::filesystem::path& path,
                                  const std::vector<Index>& block_sizes);

/// Raised when gradient descent keeps increasing the loss.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PredictorKind { gd_linear, svr_linear };

std::string to_string(PredictorKind kind);
PredictorKind predictor_kind_from_string(const std::string& name);

/// Per-block autoregression k_j[t] ~ sum_l c_{j,l} k_j[t - l], l = 1..L (no intercept).
struct Predictor {
    PredictorKind kind = PredictorKind::gd_linear;
    Index lag = 1;
    std::vector<Index> block_sizes;
    std::vector<RVector> coefficients;          // coefficients[j][l - 1] multiplies k_j[t - l]
    std::vector<std::vector<double>> loss_trace;  // per block, loss after each epoch
};

struct GdOptions {
    double learning_rate = 1.0;  // step in the regularized Gram metric, stable below 2
    int epochs = 20000;
    double gradient_tol = 1e-12;  // stop when |grad| <= tol * (1 + |target|^2 / N)
};

struct SvrOptions {
    double c = 100.0;            // hinge weight
    double epsilon_tube = 0.0;
    double learning_rate = 0.5;  // first step, as a fraction of the rms target
    int epochs = 20000;
};

/// Full-batch gradient descent on (1 / 2N) |A c - b|^2 from c = 0.
Predictor fit_gd(const OccupancyHistory& history, Index lag, const GdOptions& opts = {});

/// Subgradient descent on (1/2)|c|^2 + (C / N) sum max(0, |a_i c - b_i| - tube) from
/// c = 0. Steps follow the subgradient in the metric A^T A / N + I / C, decay as
/// 1/sqrt(epoch), and the best objective iterate is kept.
Predictor fit_svr(const OccupancyHistory& history, Index lag, const SvrOptions& opts = {});

/// Lag matrix A (rows: windows t = L..T-1, columns: k[t-1] .. k[t-L]) and targets b.
void lag_design(const std::vector<double>& series, Index lag, RMatrix& a, RVector& b);

/// Unclamped one-step prediction for one block from its last L values, oldest first.
double raw_prediction(const Predictor& pred, Index block, const std::vector<double>& recent);

/// Per-block prediction clamped to [0.1, n_j].
std::vector<double> predict_sparsity(const Predictor& pred,
                                     const std::vector<std::vector<double>>& recent);

/// min(n, ceil(c k ln(n / k))) with the natural log; n when k >= n.
Index required_measurements(double k_hat_total, Index n, double c = 2.0);

}  // namespace widescan
