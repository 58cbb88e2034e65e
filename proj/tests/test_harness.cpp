#include "widescan/harness.hpp"
#include "widescan/text.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace widescan;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "experiment": "error_gain_vs_m",
  "name": "small",
  "master_seed": 5,
  "trials": 3,
  "sweep": { "values": [20, 27] },
  "solvers": ["lasso", "wlasso", "omp"]
})";

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("widescan_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Records with the timing column cleared.
std::vector<TrialRecord> untimed(std::vector<TrialRecord> recs)
{
    for (auto& r : recs) {
        r.wall_time = 0.0;
    }
    return recs;
}

void expect_error_mentions(const std::string& json, const std::string& fragment)
{
    try {
        parse_config(json);
        ADD_FAILURE() << "no error for " << json;
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

}  // namespace

TEST(Config, DefaultsAndSweep)
{
    const auto c = parse_config(R"({"experiment": "error_gain_vs_m"})");
    EXPECT_EQ(c.trials, 200);
    EXPECT_EQ(c.spectrum.n, 100);
    EXPECT_EQ(c.m, 27);
    EXPECT_DOUBLE_EQ(c.snr_db, 7.0);
    EXPECT_EQ(c.sweep, std::vector<double>{27.0});
    const auto s = parse_config(R"({"experiment": "nmse_vs_snr", "sweep": {"values": [0, "inf"]}})");
    EXPECT_EQ(s.sweep.size(), 2u);
    EXPECT_TRUE(std::isinf(s.sweep[1]));
    EXPECT_EQ(sweep_axis(ExperimentKind::cooperative_round), "attenuation_db");
}

TEST(Config, ErrorsNameTheField)
{
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "trails": 3})", "trails");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "spectrum": {"size": 3}})", "spectrum.size");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "trials": "many"})", "trials");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "trials": 0})", "trials");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "sweep": {"values": []}})", "sweep");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "sweep": {"values": [101]}})", "sweep");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "solvers": ["lasso", "magic"]})", "magic");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "solvers": []})", "solvers");
    expect_error_mentions(R"({"experiment": "nmse_vs_snr", "sweep": {"axis": "m"}})", "sweep.axis");
    expect_error_mentions(R"({"experiment": "timing_tables"})", "timing_tables");
    expect_error_mentions(R"({"trials": 3})", "experiment");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m",)", "JSON");
    expect_error_mentions(R"({"experiment": "cooperative_round", "cooperative": {"mode": "gossip"}})", "gossip");
    expect_error_mentions(R"({"experiment": "miss_detect_cdf", "prediction": {"predictor": "lstm"}})", "lstm");
    expect_error_mentions(R"({"experiment": "error_gain_vs_m", "spectrum": {"block_probs": [0.1, 0.1]}})", "block");
}

TEST(Config, CanonicalJsonRoundTrips)
{
    const auto c = parse_config(kSmall);
    const auto back = parse_config(canonical_json(c));
    EXPECT_EQ(canonical_json(back), canonical_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, HashSeesEveryPerturbedField)
{
    const auto base = parse_config(kSmall);
    std::vector<std::function<void(ExperimentConfig&)>> edits = {
        [](auto& c) { c.name = "other"; },
        [](auto& c) { c.master_seed += 1; },
        [](auto& c) { c.trials += 1; },
        [](auto& c) { c.spectrum.block_probs[0] = 0.02; },
        [](auto& c) { c.spectrum.block_sizes = {20, 30, 25, 25}; },
        [](auto& c) { c.spectrum.amplitude = AmplitudeModel::constant; },
        [](auto& c) { c.matrices = {MatrixKind::bernoulli}; },
        [](auto& c) { c.m = 28; },
        [](auto& c) { c.snr_db = 8.0; },
        [](auto& c) { c.sweep.push_back(30); },
        [](auto& c) { c.solvers.push_back("cosamp"); },
        [](auto& c) { c.solver.tolerance = 1e-7; },
        [](auto& c) { c.solver.max_iterations = 4000; },
        [](auto& c) { c.solver.delta = 0.2; },
        [](auto& c) { c.solver.cosamp_max_itr = 40; },
        [](auto& c) { c.threshold = 0.2; },
        [](auto& c) { c.cooperative.quorum = 0.75; },
        [](auto& c) { c.cooperative.shadowed_band = 31; },
        [](auto& c) { c.prediction.lag = 4; },
        [](auto& c) { c.prediction.end_probs[2] = 0.3; },
        [](auto& c) { c.output = "elsewhere"; },
    };
    std::set<std::string> hashes{config_hash(base)};
    for (std::size_t i = 0; i < edits.size(); ++i) {
        auto c = base;
        edits[i](c);
        EXPECT_TRUE(hashes.insert(config_hash(c)).second) << "edit " << i;
    }
}

TEST(Records, CsvRoundTripAndHeader)
{
    auto c = parse_config(kSmall);
    const auto result = run_experiment(c);
    ASSERT_EQ(result.records.size(), 2u * 3u * 3u);
    const auto dir = scratch("csv");
    emit_csv(result.records, dir / "r.csv");
    std::ifstream in(dir / "r.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header,
              "experiment,sweep_value,matrix,arm,trial,seed,solver,m,snr_db,nmse,nmse_l2,occupied,"
              "misses,false_alarms,tracked_miss,coherence,wall_time,iterations,converged");
    EXPECT_EQ(parse_records_csv(dir / "r.csv"), result.records);
    EXPECT_THROW(emit_csv({}, dir / "empty.csv"), InvalidArgument);
    EXPECT_THROW(emit_csv(result.records, dir / "missing" / "r.csv"), InvalidArgument);
    fs::remove_all(dir);
}

TEST(Records, OneRowPerSweepTrialSolver)
{
    const auto result = run_experiment(parse_config(kSmall));
    std::set<std::tuple<double, long long, std::string>> keys;
    for (const auto& r : result.records) {
        EXPECT_TRUE(keys.insert({r.sweep_value, r.trial, r.solver}).second);
        EXPECT_EQ(r.seed, trial_seed(5, r.sweep_value == 20 ? 0 : 1, r.trial));
        EXPECT_EQ(r.m, static_cast<Index>(r.sweep_value));
    }
}

TEST(Run, SameSeedSameBytes)
{
    auto c = parse_config(kSmall);
    c.trials = 1;
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    auto ra = run_experiment(c);
    auto rb = run_experiment(c);
    ra.records = untimed(ra.records);
    rb.records = untimed(rb.records);
    emit_csv(ra.records, a / "records.csv");
    emit_csv(rb.records, b / "records.csv");
    EXPECT_EQ(slurp(a / "records.csv"), slurp(b / "records.csv"));
    c.master_seed = 6;
    EXPECT_NE(untimed(run_experiment(c).records), ra.records);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Run, TrialOrderDoesNotMatter)
{
    const auto c = parse_config(kSmall);
    std::vector<std::pair<std::size_t, long long>> order;
    for (std::size_t s = 0; s < c.sweep.size(); ++s) {
        for (long long t = 0; t < c.trials; ++t) {
            order.emplace_back(s, t);
        }
    }
    std::vector<TrialRecord> forward;
    for (const auto& [s, t] : order) {
        const auto r = run_trial(c, s, t);
        forward.insert(forward.end(), r.begin(), r.end());
    }
    std::vector<TrialRecord> shuffled;
    std::mt19937 rng(12);
    auto perm = order;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (const auto& [s, t] : perm) {
        const auto r = run_trial(c, s, t);
        shuffled.insert(shuffled.end(), r.begin(), r.end());
    }
    const auto key = [](const TrialRecord& r) { return std::tuple(r.sweep_value, r.trial, r.solver); };
    std::sort(shuffled.begin(), shuffled.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    std::sort(forward.begin(), forward.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    EXPECT_EQ(untimed(forward), untimed(shuffled));
    EXPECT_EQ(untimed(run_experiment(c).records).size(), forward.size());
}

TEST(Run, NoiseFreeExactRegime)
{
    const auto c = parse_config(R"({
      "experiment": "nmse_vs_snr",
      "trials": 20,
      "spectrum": {"n": 64, "block_sizes": [32, 32], "block_probs": [0.03, 0.03]},
      "m": 32,
      "sweep": {"values": ["inf"]},
      "solvers": ["omp"]
    })");
    const auto result = run_experiment(c);
    ASSERT_EQ(result.summary.size(), 1u);
    EXPECT_LE(result.summary[0].mean_nmse, 1e-4);
    EXPECT_TRUE(std::isinf(result.records[0].snr_db));
}

TEST(Run, IterationCapIsRecordedNotFatal)
{
    auto c = parse_config(kSmall);
    c.solver.max_iterations = 2;
    const auto result = run_experiment(c);
    bool any_unconverged = false;
    for (const auto& r : result.records) {
        if (r.solver == "lasso") {
            any_unconverged |= !r.converged;
        }
    }
    EXPECT_TRUE(any_unconverged);
}

TEST(Summary, StatisticsMatchHandComputation)
{
    std::vector<TrialRecord> recs;
    const auto rec = [](long long trial, const std::string& solver, double e, long long occ, long long miss) {
        TrialRecord r;
        r.sweep_value = 27;
        r.matrix = "gaussian";
        r.trial = trial;
        r.solver = solver;
        r.nmse = e;
        r.nmse_l2 = e;
        r.occupied = occ;
        r.misses = miss;
        r.m = 27;
        r.converged = true;
        return r;
    };
    recs.push_back(rec(0, "wlasso", 1.0, 4, 1));
    recs.push_back(rec(0, "lasso", 2.0, 4, 2));
    recs.push_back(rec(1, "wlasso", 3.0, 2, 0));
    recs.push_back(rec(1, "lasso", 4.0, 2, 1));
    const auto s = summarize(recs, 10);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].solver, "wlasso");
    EXPECT_DOUBLE_EQ(s[1].mean_nmse, 3.0);
    EXPECT_NEAR(s[1].se_nmse, std::sqrt(2.0) / std::sqrt(2.0), 1e-12);
    EXPECT_DOUBLE_EQ(s[1].miss_rate, 3.0 / 6.0);
    EXPECT_DOUBLE_EQ(s[1].median_miss_rate, 0.5);
    // gains 0.5 and 0.25: mean 0.375, se 0.125
    EXPECT_DOUBLE_EQ(s[1].gain_vs_wlasso, 0.375);
    EXPECT_NEAR(s[1].gain_lower95, 0.375 - 1.645 * 0.125, 1e-12);
    EXPECT_TRUE(std::isnan(s[0].gain_vs_wlasso));
}

TEST(Timing, TableAndEmptySolverList)
{
    auto c = parse_config(R"({"experiment": "timing_table", "trials": 3, "sweep": {"values": [30]},
                              "solvers": ["lasso", "wlasso", "omp", "cosamp"]})");
    const auto t = timing_table(c);
    ASSERT_EQ(t.rows.size(), 4u);
    EXPECT_EQ(t.rows[0].count, 3);
    EXPECT_GT(t.rows[0].mean_iterations, 0.0);
    EXPECT_TRUE(std::isfinite(t.wlasso_lasso_ratio));
    c.solvers.clear();
    EXPECT_THROW(timing_table(c), InvalidArgument);
}

TEST(Outputs, FilesPerKind)
{
    const auto dir = scratch("out");
    auto coop = parse_config(R"({"experiment": "cooperative_round", "trials": 2, "sweep": {"values": [20]}})");
    write_outputs(run_experiment(coop), coop, dir / "coop");
    EXPECT_TRUE(fs::exists(dir / "coop" / "fusion_log.csv"));
    const auto summary = slurp(dir / "coop" / "summary.csv");
    EXPECT_EQ(summary.rfind("# config_hash=" + config_hash(coop) + "\n# master_seed=1\n", 0), 0u);
    EXPECT_NE(summary.find(kSummaryHeader), std::string::npos);
    EXPECT_EQ(slurp(dir / "coop" / "config_echo.json"), canonical_json(coop));
    const auto log = slurp(dir / "coop" / "fusion_log.csv");
    EXPECT_EQ(log.rfind("round,su_id,rows_contributed,decision_hash\n0,0,32,", 0), 0u);
    EXPECT_NE(log.find("\n1,fc,0,"), std::string::npos);

    auto drift = parse_config(R"({"experiment": "miss_detect_cdf", "sweep": {"values": [7]},
        "prediction": {"windows": 4, "warmup": 10, "train_window": 8, "refit_every": 2, "lag": 2, "epochs": 50}})");
    const auto res = run_experiment(drift);
    EXPECT_EQ(res.records.size(), 8u);
    write_outputs(res, drift, dir / "drift");
    const auto cdf = slurp(dir / "drift" / "cdf.csv");
    EXPECT_EQ(cdf.rfind("arm,miss_rate,cdf\n", 0), 0u);
    fs::remove_all(dir);
}

TEST(Shipped, EveryKindHasAConfigAndDefaultsMatch)
{
    std::set<std::string> kinds;
    for (const auto& entry : fs::directory_iterator(WIDESCAN_CONFIG_DIR)) {
        if (entry.path().extension() == ".json") {
            kinds.insert(to_string(load_config(entry.path()).kind));
        }
    }
    EXPECT_EQ(kinds.size(), 6u);
    const auto def = load_config(fs::path(WIDESCAN_CONFIG_DIR) / "error_gain_vs_m.json");
    EXPECT_DOUBLE_EQ(def.snr_db, 7.0);
    EXPECT_NE(std::find(def.sweep.begin(), def.sweep.end(), 27.0), def.sweep.end());
}
