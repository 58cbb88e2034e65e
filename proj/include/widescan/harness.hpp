#pragma once

#include "widescan/common.hpp"
#include "widescan/measurement.hpp"
#include "widescan/spectrum.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace widescan {

enum class ExperimentKind {
    nmse_vs_snr,
    error_gain_vs_m,
    miss_detect_cdf,
    timing_table,
    coherence_study,
    cooperative_round,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct SpectrumParams {
    Index n = 100;
    std::vector<Index> block_sizes{25, 25, 25, 25};
    std::vector<double> block_probs{0.01, 0.4, 0.04, 0.01};
    AmplitudeModel amplitude = AmplitudeModel::rayleigh;
};

struct SolverParams {
    double tolerance = 1e-6;
    int max_iterations = 5000;
    double delta = 0.1;            // epsilon inflation
    double omp_kmax_fraction = 0.5;  // OMP stops at floor(fraction * m) atoms
    int cosamp_max_itr = 50;
    Index assamp_step = 2;
    int assamp_max_itr = 200;
};

struct CooperativeParams {
    int num_sus = 5;
    Index branches = 8;
    Index scans = 4;
    std::vector<int> shadowed_sus{0};
    Index shadowed_band = 30;  // forced occupied in every round
    std::string mode = "vote";
    double quorum = 0.5;
    Index target_m = 0;  // pool mode; 0 = all rows of the round
};

struct PredictionParams {
    Index windows = 300;
    Index warmup = 60;
    Index train_window = 120;
    Index refit_every = 20;
    Index lag = 5;
    std::string predictor = "gd_linear";
    double learning_rate = 1.0;
    int epochs = 2000;
    double svr_c = 100.0;
    double svr_tube = 0.0;
    double m_constant = 2.0;
    std::vector<double> end_probs{0.01, 0.4, 0.5, 0.01};  // spectrum.block_probs is the start
};

/// One reproducible Monte Carlo specification. The sweep axis is fixed by the kind:
/// snr_db for nmse_vs_snr and miss_detect_cdf, m for error_gain_vs_m, timing_table
/// and coherence_study, attenuation_db for cooperative_round.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::nmse_vs_snr;
    std::string name = "experiment";
    std::uint64_t master_seed = 1;
    int trials = 200;
    SpectrumParams spectrum;
    std::vector<MatrixKind> matrices{MatrixKind::gaussian};
    Index m = 27;
    double snr_db = 7.0;  // +inf for noise-free
    std::vector<double> sweep;
    std::vector<std::string> solvers{"lasso", "wlasso", "omp", "cosamp", "assamp"};
    SolverParams solver;
    double threshold = 0.1;  // energy detection on |z_b|^2
    CooperativeParams cooperative;
    PredictionParams prediction;
    std::string output = "out";
};

std::string sweep_axis(ExperimentKind kind);

/// Names accepted in the solver list.
const std::vector<std::string>& known_solvers();

/// Parses JSON text. Missing fields take the defaults above; unknown keys,
/// wrong types and invalid values throw InvalidArgument naming the field.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of every field (sorted keys, fixed number formatting).
std::string canonical_json(const ExperimentConfig& config);

/// FNV-1a 64 of canonical_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Throws InvalidArgument when the config breaks an invariant.
void validate(const ExperimentConfig& config);

/// One metric row. `arm` separates variants inside a trial: "main" for plain
/// sweeps, "predicted"/"stale" for miss_detect_cdf, "su<id>"/"fused" for
/// cooperative rounds.
struct TrialRecord {
    std::string experiment;
    double sweep_value = 0.0;
    std::string matrix;
    std::string arm = "main";
    long long trial = 0;
    std::uint64_t seed = 0;
    std::string solver;
    Index m = 0;
    double snr_db = 0.0;       // realized |x|^2 / |eta|^2
    double nmse = 0.0;         // |z - x|_2 / |x|_0
    double nmse_l2 = 0.0;      // |z - x|_2 / |x|_2
    long long occupied = 0;
    long long misses = 0;
    long long false_alarms = 0;
    long long tracked_miss = -1;  // miss on the tracked band, -1 if none
    double coherence = -1.0;      // -1 when not computed
    double wall_time = 0.0;
    long long iterations = 0;
    bool converged = false;

    bool operator==(const TrialRecord&) const = default;
};

/// Seed of trial t at sweep point s: derive_seed(master, {s, t}).
std::uint64_t trial_seed(std::uint64_t master, std::size_t sweep_index, long long trial);

/// All records of one trial at one sweep point; pure in (config, indices).
std::vector<TrialRecord> run_trial(const ExperimentConfig& config, std::size_t sweep_index,
                                   long long trial);

struct SummaryRow {
    double sweep_value = 0.0;
    std::string matrix;
    std::string arm;
    std::string solver;
    long long count = 0;
    double mean_nmse = 0.0;
    double se_nmse = 0.0;
    double mean_nmse_l2 = 0.0;
    double se_nmse_l2 = 0.0;
    double miss_rate = 0.0;         // total misses / total occupied
    double median_miss_rate = 0.0;  // median of per-trial miss fractions
    double false_alarm_rate = 0.0;  // total false alarms / total vacant
    double tracked_miss_rate = -1.0;
    double mean_m = 0.0;
    double mean_coherence = -1.0;
    double mean_time = 0.0;
    double mean_iterations = 0.0;
    double converged_fraction = 0.0;
    double gain_vs_wlasso = 0.0;  // mean per-trial (e_solver - e_wlasso) / e_solver
    double gain_lower95 = 0.0;    // one-sided 95% lower bound of that mean
};

struct ExperimentResult {
    std::vector<TrialRecord> records;
    std::vector<SummaryRow> summary;
    std::vector<std::string> fusion_log;  // cooperative_round only, CSV lines without header
};

/// Runs every sweep point and trial in a fixed order. A solver failure is
/// recorded as converged = false; it never aborts the sweep.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Groups by (sweep value, matrix, arm, solver), in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records, Index n);

struct TimingRow {
    std::string solver;
    long long count = 0;
    double mean_time = 0.0;
    double mean_iterations = 0.0;
};

struct TimingTable {
    std::vector<TimingRow> rows;
    double wlasso_lasso_ratio = 0.0;  // NaN when either is missing
    bool ratio_ok = false;
    bool omp_before_cosamp = false;
    bool cosamp_before_lasso = false;
};

/// Mean wall time and iterations per solver on matched instances.
TimingTable timing_table(const ExperimentConfig& config);
TimingTable timing_table(const std::vector<TrialRecord>& records);

extern const char* const kRecordsHeader;
extern const char* const kSummaryHeader;

void emit_csv(const std::vector<TrialRecord>& records, const std::filesystem::path& path);
std::vector<TrialRecord> parse_records_csv(const std::filesystem::path& path);
void emit_summary(const std::vector<SummaryRow>& summary, const ExperimentConfig& config,
                  const std::filesystem::path& path);

/// Writes records.csv, summary.csv, config_echo.json and, per kind,
/// cdf.csv (miss_detect_cdf) or fusion_log.csv (cooperative_round).
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                   const std::filesystem::path& dir);

}  // namespace widescan
