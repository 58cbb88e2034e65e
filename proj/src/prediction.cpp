#include "widescan/prediction.hpp"

#include "widescan/recovery.hpp"
#include "widescan/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace widescan {

OccupancyHistory::OccupancyHistory(std::vector<Index> block_sizes, double window_seconds)
    : block_sizes_(std::move(block_sizes)), window_seconds_(window_seconds),
      series_(block_sizes_.size())
{
    require(!block_sizes_.empty(), "occupancy history: need at least one block");
    for (Index s : block_sizes_) {
        require(s >= 1, "occupancy history: block sizes must be >= 1");
    }
    require(window_seconds > 0.0, "occupancy history: window length must be positive");
}

void OccupancyHistory::append(const std::vector<double>& counts)
{
    require(counts.size() == block_sizes_.size(),
            "occupancy history: expected " + std::to_string(block_sizes_.size()) + " counts, got " +
                std::to_string(counts.size()));
    for (std::size_t j = 0; j < counts.size(); ++j) {
        require(counts[j] >= 0.0 && counts[j] <= static_cast<double>(block_sizes_[j]),
                "occupancy history: count " + format_double(counts[j]) + " outside [0, " +
                    std::to_string(block_sizes_[j]) + "] for block " + std::to_string(j));
    }
    for (std::size_t j = 0; j < counts.size(); ++j) {
        series_[j].push_back(counts[j]);
    }
}

std::vector<std::vector<double>> OccupancyHistory::recent(Index lag) const
{
    require(lag >= 1 && lag <= length(), "occupancy history: not enough windows for the lag");
    std::vector<std::vector<double>> out;
    for (const auto& s : series_) {
        out.emplace_back(s.end() - lag, s.end());
    }
    return out;
}

OccupancyHistory OccupancyHistory::head(Index count) const
{
    require(count >= 0 && count <= length(), "occupancy history: head beyond the end");
    OccupancyHistory h(block_sizes_, window_seconds_);
    for (std::size_t j = 0; j < series_.size(); ++j) {
        h.series_[j].assign(series_[j].begin(), series_[j].begin() + count);
    }
    return h;
}

void save_history_csv(const OccupancyHistory& h, const std::filesystem::path& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot open '" + path.string() + "' for writing");
    out << "t,block,k\n";
    for (Index t = 0; t < h.length(); ++t) {
        for (Index j = 0; j < h.num_blocks(); ++j) {
            out << (t + 1) << ',' << j << ',' << format_double(h.series(j)[static_cast<std::size_t>(t)])
                << '\n';
        }
    }
    require(static_cast<bool>(out), "write to '" + path.string() + "' failed");
}

OccupancyHistory load_history_csv(const std::filesystem::path& path,
                                  const std::vector<Index>& block_sizes)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    require(line == "t,block,k", "history csv: expected header 't,block,k'");

    std::map<long long, std::vector<double>> rows;
    const auto g = static_cast<long long>(block_sizes.size());
    const double unset = -1.0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto cells = split(line, ',');
        require(cells.size() == 3, "history csv: expected 3 columns in '" + line + "'");
        const long long t = parse_int(cells[0]);
        const long long j = parse_int(cells[1]);
        require(t >= 1, "history csv: t must start at 1");
        require(j >= 0 && j < g, "history csv: block index out of range in '" + line + "'");
        auto& slot = rows.try_emplace(t, block_sizes.size(), unset).first->second;
        require(slot[static_cast<std::size_t>(j)] == unset, "history csv: duplicate (t, block) in '" + line + "'");
        slot[static_cast<std::size_t>(j)] = parse_double(cells[2]);
    }
    OccupancyHistory h(block_sizes);
    long long expect = 1;
    for (const auto& [t, counts] : rows) {
        require(t == expect, "history csv: missing window " + std::to_string(expect));
        for (double k : counts) {
            require(k != unset, "history csv: window " + std::to_string(t) + " lacks a block");
        }
        h.append(counts);
        ++expect;
    }
    return h;
}

std::string to_string(PredictorKind kind)
{
    return kind == PredictorKind::gd_linear ? "gd_linear" : "svr_linear";
}

PredictorKind predictor_kind_from_string(const std::string& name)
{
    if (name == "gd_linear" || name == "gd") {
        return PredictorKind::gd_linear;
    }
    if (name == "svr_linear" || name == "svr") {
        return PredictorKind::svr_linear;
    }
    throw InvalidArgument("unknown predictor '" + name + "' (expected gd_linear or svr_linear)");
}

void lag_design(const std::vector<double>& series, Index lag, RMatrix& a, RVector& b)
{
    const auto t_len = static_cast<Index>(series.size());
    require(lag >= 1, "lag must be >= 1");
    require(t_len > lag, "need more windows (" + std::to_string(t_len) + ") than the lag (" +
                             std::to_string(lag) + ")");
    const Index rows = t_len - lag;
    a.resize(rows, lag);
    b.resize(rows);
    for (Index i = 0; i < rows; ++i) {
        const Index t = i + lag;
        b[i] = series[static_cast<std::size_t>(t)];
        for (Index l = 1; l <= lag; ++l) {
            a(i, l - 1) = series[static_cast<std::size_t>(t - l)];
        }
    }
}

namespace {

Predictor blank(PredictorKind kind, const OccupancyHistory& history, Index lag)
{
    require(lag >= 1, "lag must be >= 1");
    require(history.length() > lag, "need more windows (" + std::to_string(history.length()) +
                                        ") than the lag (" + std::to_string(lag) + ")");
    Predictor p;
    p.kind = kind;
    p.lag = lag;
    p.block_sizes = history.block_sizes();
    return p;
}

// Mean squared row norm; zero only for an all-zero design.
double mean_row_energy(const RMatrix& a)
{
    return a.squaredNorm() / static_cast<double>(a.rows());
}

}  // namespace

Predictor fit_gd(const OccupancyHistory& history, Index lag, const GdOptions& opts)
{
    require(opts.learning_rate > 0.0, "fit_gd: learning rate must be positive");
    require(opts.epochs >= 0, "fit_gd: epochs must be >= 0");
    Predictor p = blank(PredictorKind::gd_linear, history, lag);
    for (Index j = 0; j < history.num_blocks(); ++j) {
        RMatrix a;
        RVector b;
        lag_design(history.series(j), lag, a, b);
        const double rows = static_cast<double>(a.rows());
        const RMatrix gram = a.transpose() * a / rows;
        const RVector atb = a.transpose() * b / rows;
        const double btb = b.squaredNorm() / rows;
        const double energy = mean_row_energy(a);
        const double step = energy > 0.0 ? opts.learning_rate : 0.0;
        // Lagged counts are nearly collinear (a linear ramp gives condition numbers in the
        // thousands), so descent runs in the metric of the Gram matrix plus a small ridge.
        // The metric dominates the Hessian: any rate below 2 decreases the loss.
        const RMatrix metric = gram + RMatrix::Identity(lag, lag) * (1e-3 * energy / static_cast<double>(lag));
        const Eigen::LDLT<RMatrix> solver(metric);

        RVector c = RVector::Zero(lag);
        std::vector<double> trace;
        double prev = 0.5 * btb;
        int rising = 0;
        for (int e = 0; e < opts.epochs && step > 0.0; ++e) {
            const RVector grad = gram * c - atb;
            if (grad.norm() <= opts.gradient_tol * (1.0 + btb)) {
                break;
            }
            c -= step * solver.solve(grad);
            const double loss = 0.5 * (a * c - b).squaredNorm() / rows;
            trace.push_back(loss);
            rising = loss > prev ? rising + 1 : 0;
            if (rising >= 10 || !std::isfinite(loss)) {
                throw TrainingDiverged("fit_gd: loss increased for 10 consecutive epochs on block " +
                                       std::to_string(j) + "; use a smaller learning rate than " +
                                       format_double(opts.learning_rate));
            }
            prev = loss;
        }
        p.coefficients.push_back(std::move(c));
        p.loss_trace.push_back(std::move(trace));
    }
    return p;
}

Predictor fit_svr(const OccupancyHistory& history, Index lag, const SvrOptions& opts)
{
    require(opts.c > 0.0, "fit_svr: C must be positive");
    require(opts.epsilon_tube >= 0.0, "fit_svr: tube must be >= 0");
    require(opts.learning_rate > 0.0, "fit_svr: learning rate must be positive");
    require(opts.epochs >= 0, "fit_svr: epochs must be >= 0");
    Predictor p = blank(PredictorKind::svr_linear, history, lag);
    for (Index j = 0; j < history.num_blocks(); ++j) {
        RMatrix a;
        RVector b;
        lag_design(history.series(j), lag, a, b);
        const double rows = static_cast<double>(a.rows());
        const double weight = opts.c / rows;
        const auto objective = [&](const RVector& c) {
            const RVector excess = ((a * c - b).cwiseAbs().array() - opts.epsilon_tube).max(0.0);
            return 0.5 * c.squaredNorm() + weight * excess.sum();
        };
        // Lagged counts are strongly collinear, so plain subgradient steps crawl along
        // the flat direction. Steps are taken in the metric of the regularized Gram
        // matrix instead; the step length decays as 1/sqrt(epoch).
        const RMatrix metric =
            a.transpose() * a / rows + RMatrix::Identity(lag, lag) / opts.c;
        const Eigen::LDLT<RMatrix> solver(metric);
        const double scale = std::sqrt(b.squaredNorm() / rows);
        const double step0 = opts.learning_rate * scale;
        const double row_norm = std::sqrt(mean_row_energy(a));

        RVector c = RVector::Zero(lag);
        RVector best = c;
        double best_obj = objective(c);
        std::vector<double> trace;
        for (int e = 0; e < opts.epochs && step0 > 0.0; ++e) {
            const RVector resid = a * c - b;
            RVector grad = c / opts.c;
            for (Index i = 0; i < a.rows(); ++i) {
                if (std::abs(resid[i]) > opts.epsilon_tube) {
                    grad += (resid[i] > 0.0 ? 1.0 : -1.0) / rows * a.row(i).transpose();
                }
            }
            if (grad.squaredNorm() == 0.0) {
                break;
            }
            const RVector dir = solver.solve(grad);
            // normalized so a step moves predictions by about step0 / sqrt(epoch + 1)
            const double length = dir.norm() * row_norm;
            c -= step0 / (std::sqrt(static_cast<double>(e) + 1.0) * length) * dir;
            const double obj = objective(c);
            if (obj < best_obj) {
                best_obj = obj;
                best = c;
            }
            trace.push_back(best_obj);
        }
        p.coefficients.push_back(std::move(best));
        p.loss_trace.push_back(std::move(trace));
    }
    return p;
}

double raw_prediction(const Predictor& pred, Index block, const std::vector<double>& recent)
{
    require(block >= 0 && block < static_cast<Index>(pred.coefficients.size()),
            "prediction: block index out of range");
    require(static_cast<Index>(recent.size()) == pred.lag,
            "prediction: expected " + std::to_string(pred.lag) + " recent values, got " +
                std::to_string(recent.size()));
    const RVector& c = pred.coefficients[static_cast<std::size_t>(block)];
    double v = 0.0;
    for (Index l = 1; l <= pred.lag; ++l) {
        v += c[l - 1] * recent[recent.size() - static_cast<std::size_t>(l)];
    }
    return v;
}

std::vector<double> predict_sparsity(const Predictor& pred,
                                     const std::vector<std::vector<double>>& recent)
{
    require(recent.size() == pred.coefficients.size(),
            "prediction: need recent values for every block");
    std::vector<double> out;
    for (std::size_t j = 0; j < recent.size(); ++j) {
        const double raw = raw_prediction(pred, static_cast<Index>(j), recent[j]);
        const double cap = static_cast<double>(pred.block_sizes[j]);
        out.push_back(std::clamp(std::isfinite(raw) ? raw : cap, kSparsityFloor, cap));
    }
    return out;
}

Index required_measurements(double k_hat_total, Index n, double c)
{
    require(n >= 1, "required_measurements: n must be >= 1");
    require(c > 0.0, "required_measurements: c must be positive");
    require(k_hat_total > 0.0, "required_measurements: sparsity estimate must be positive");
    const double nd = static_cast<double>(n);
    if (k_hat_total >= nd) {
        return n;
    }
    const double m = std::ceil(c * k_hat_total * std::log(nd / k_hat_total));
    return std::clamp<Index>(static_cast<Index>(m), 1, n);
}

}  // namespace widescan
