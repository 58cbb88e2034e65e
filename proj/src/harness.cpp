#include "widescan/harness.hpp"

#include "widescan/cooperative.hpp"
#include "widescan/prediction.hpp"
#include "widescan/recovery.hpp"
#include "widescan/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace widescan {

using Json = nlohmann::json;

namespace {

const std::vector<std::pair<ExperimentKind, std::string>> kKindNames = {
    {ExperimentKind::nmse_vs_snr, "nmse_vs_snr"},
    {ExperimentKind::error_gain_vs_m, "error_gain_vs_m"},
    {ExperimentKind::miss_detect_cdf, "miss_detect_cdf"},
    {ExperimentKind::timing_table, "timing_table"},
    {ExperimentKind::coherence_study, "coherence_study"},
    {ExperimentKind::cooperative_round, "cooperative_round"},
};

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string to_string(ExperimentKind kind)
{
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) {
            return name;
        }
    }
    return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& name)
{
    for (const auto& [k, n] : kKindNames) {
        if (n == name) {
            return k;
        }
    }
    throw InvalidArgument("unknown experiment kind '" + name + "'");
}

std::string sweep_axis(ExperimentKind kind)
{
    switch (kind) {
    case ExperimentKind::nmse_vs_snr:
    case ExperimentKind::miss_detect_cdf:
        return "snr_db";
    case ExperimentKind::cooperative_round:
        return "attenuation_db";
    default:
        return "m";
    }
}

const std::vector<std::string>& known_solvers()
{
    static const std::vector<std::string> names = {"lasso",  "wlasso", "wlasso_scaled", "bp",
                                                   "omp",    "cosamp", "assamp"};
    return names;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

// Reads one JSON object, remembering which keys were used so leftovers can be
// reported as unknown.
class Section {
public:
    Section(const Json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        require(obj.is_object(), where("") + " must be an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    template <typename Fn>
    void read(const std::string& key, Fn&& fn)
    {
        used_.insert(key);
        if (!obj_.contains(key)) {
            return;
        }
        try {
            fn(obj_.at(key), where(key));
        } catch (const Json::exception& e) {
            throw InvalidArgument(where(key) + ": " + e.what());
        }
    }

    void finish() const
    {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            require(used_.count(it.key()) == 1, "unknown config key '" + where(it.key()) + "'");
        }
    }

    std::string where(const std::string& key) const
    {
        if (key.empty()) {
            return path_.empty() ? "config" : path_;
        }
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const Json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

double as_number(const Json& v, const std::string& where)
{
    if (v.is_number()) {
        return v.get<double>();
    }
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "-inf") {
            return parse_double(s);
        }
    }
    throw InvalidArgument(where + ": expected a number (or \"inf\")");
}

long long as_integer(const Json& v, const std::string& where)
{
    require(v.is_number_integer(), where + ": expected an integer");
    return v.get<long long>();
}

std::string as_string(const Json& v, const std::string& where)
{
    require(v.is_string(), where + ": expected a string");
    return v.get<std::string>();
}

template <typename T, typename Fn>
std::vector<T> as_list(const Json& v, const std::string& where, Fn&& item)
{
    require(v.is_array(), where + ": expected a list");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(item(v[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
}

AmplitudeModel amplitude_from_string(const std::string& s, const std::string& where)
{
    if (s == "rayleigh") {
        return AmplitudeModel::rayleigh;
    }
    if (s == "constant") {
        return AmplitudeModel::constant;
    }
    throw InvalidArgument(where + ": unknown amplitude model '" + s + "'");
}

std::string to_string(AmplitudeModel a)
{
    return a == AmplitudeModel::rayleigh ? "rayleigh" : "constant";
}

Json number_json(double v)
{
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    return v;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text)
{
    Json root;
    try {
        root = Json::parse(json_text);
    } catch (const Json::parse_error& e) {
        throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c;
    Section top(root, "");
    bool kind_seen = false;
    top.read("experiment", [&](const Json& v, const std::string& w) {
        c.kind = experiment_kind_from_string(as_string(v, w));
        kind_seen = true;
    });
    require(kind_seen, "config: missing required key 'experiment'");
    top.read("name", [&](const Json& v, const std::string& w) { c.name = as_string(v, w); });
    top.read("master_seed", [&](const Json& v, const std::string& w) {
        require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0),
                w + ": expected a non-negative integer");
        c.master_seed = v.get<std::uint64_t>();
    });
    top.read("trials", [&](const Json& v, const std::string& w) {
        c.trials = static_cast<int>(as_integer(v, w));
    });
    top.read("spectrum", [&](const Json& v, const std::string& w) {
        Section s(v, w);
        s.read("n", [&](const Json& x, const std::string& wx) { c.spectrum.n = as_integer(x, wx); });
        s.read("block_sizes", [&](const Json& x, const std::string& wx) {
            c.spectrum.block_sizes = as_list<Index>(x, wx, as_integer);
        });
        s.read("block_probs", [&](const Json& x, const std::string& wx) {
            c.spectrum.block_probs = as_list<double>(x, wx, as_number);
        });
        s.read("amplitude", [&](const Json& x, const std::string& wx) {
            c.spectrum.amplitude = amplitude_from_string(as_string(x, wx), wx);
        });
        s.finish();
    });
    top.read("matrices", [&](const Json& v, const std::string& w) {
        c.matrices = as_list<MatrixKind>(v, w, [](const Json& x, const std::string& wx) {
            return matrix_kind_from_string(as_string(x, wx));
        });
    });
    top.read("m", [&](const Json& v, const std::string& w) { c.m = as_integer(v, w); });
    top.read("snr_db", [&](const Json& v, const std::string& w) { c.snr_db = as_number(v, w); });
    top.read("sweep", [&](const Json& v, const std::string& w) {
        Section s(v, w);
        std::string axis = sweep_axis(c.kind);
        s.read("axis", [&](const Json& x, const std::string& wx) {
            axis = as_string(x, wx);
            require(axis == sweep_axis(c.kind), wx + ": experiment " + to_string(c.kind) +
                                                    " sweeps '" + sweep_axis(c.kind) + "', not '" +
                                                    axis + "'");
        });
        s.read("values", [&](const Json& x, const std::string& wx) {
            c.sweep = as_list<double>(x, wx, as_number);
            require(!c.sweep.empty(), wx + " must not be empty (omit it for a single point)");
        });
        s.finish();
    });
    top.read("solvers", [&](const Json& v, const std::string& w) {
        c.solvers = as_list<std::string>(v, w, as_string);
    });
    top.read("solver_params", [&](const Json& v, const std::string& w) {
        Section s(v, w);
        auto& p = c.solver;
        s.read("tolerance", [&](const Json& x, const std::string& wx) { p.tolerance = as_number(x, wx); });
        s.read("max_iterations", [&](const Json& x, const std::string& wx) {
            p.max_iterations = static_cast<int>(as_integer(x, wx));
        });
        s.read("delta", [&](const Json& x, const std::string& wx) { p.delta = as_number(x, wx); });
        s.read("omp_kmax_fraction", [&](const Json& x, const std::string& wx) {
            p.omp_kmax_fraction = as_number(x, wx);
        });
        s.read("cosamp_max_itr", [&](const Json& x, const std::string& wx) {
            p.cosamp_max_itr = static_cast<int>(as_integer(x, wx));
        });
        s.read("assamp_step", [&](const Json& x, const std::string& wx) { p.assamp_step = as_integer(x, wx); });
        s.read("assamp_max_itr", [&](const Json& x, const std::string& wx) {
            p.assamp_max_itr = static_cast<int>(as_integer(x, wx));
        });
        s.finish();
    });
    top.read("detection", [&](const Json& v, const std::string& w) {
        Section s(v, w);
        s.read("threshold", [&](const Json& x, const std::string& wx) { c.threshold = as_number(x, wx); });
        s.finish();
    });
    top.read("cooperative", [&](const Json& v, const std::string& w) {
        Section s(v, w);
        auto& p = c.cooperative;
        s.read("num_sus", [&](const Json& x, const std::string& wx) { p.num_sus = static_cast<int>(as_integer(x, wx)); });
        s.read("branches", [&](const Json& x, const std::string& wx) { p.branches = as_integer(x, wx); });
        s.read("scans", [&](const Json& x, const std::string& wx) { p.scans = as_integer(x, wx); });
        s.read("shadowed_sus", [&](const Json& x, const std::string& wx) {
            p.shadowed_sus = as_list<int>(x, wx, [](const Json& e, const std::string& we) {
                return static_cast<int>(as_integer(e, we));
            });
        });
        s.read("shadowed_band", [&](const Json& x, const std::string& wx) { p.shadowed_band = as_integer(x, wx); });
        s.read("mode", [&](const Json& x, const std::string& wx) { p.mode = as_string(x, wx); });
        s.read("quorum", [&](const Json& x, const std::string& wx) { p.quorum = as_number(x, wx); });
        s.read("target_m", [&](const Json& x, const std::string& wx) { p.target_m = as_integer(x, wx); });
        s.finish();
    });
    top.read("prediction", [&](const Json& v, const std::string& w) {
        Section s(v, w);
        auto& p = c.prediction;
        s.read("windows", [&](const Json& x, const std::string& wx) { p.windows = as_integer(x, wx); });
        s.read("warmup", [&](const Json& x, const std::string& wx) { p.warmup = as_integer(x, wx); });
        s.read("train_window", [&](const Json& x, const std::string& wx) { p.train_window = as_integer(x, wx); });
        s.read("refit_every", [&](const Json& x, const std::string& wx) { p.refit_every = as_integer(x, wx); });
        s.read("lag", [&](const Json& x, const std::string& wx) { p.lag = as_integer(x, wx); });
        s.read("predictor", [&](const Json& x, const std::string& wx) { p.predictor = as_string(x, wx); });
        s.read("learning_rate", [&](const Json& x, const std::string& wx) { p.learning_rate = as_number(x, wx); });
        s.read("epochs", [&](const Json& x, const std::string& wx) { p.epochs = static_cast<int>(as_integer(x, wx)); });
        s.read("svr_c", [&](const Json& x, const std::string& wx) { p.svr_c = as_number(x, wx); });
        s.read("svr_tube", [&](const Json& x, const std::string& wx) { p.svr_tube = as_number(x, wx); });
        s.read("m_constant", [&](const Json& x, const std::string& wx) { p.m_constant = as_number(x, wx); });
        s.read("end_probs", [&](const Json& x, const std::string& wx) {
            p.end_probs = as_list<double>(x, wx, as_number);
        });
        s.finish();
    });
    top.read("output", [&](const Json& v, const std::string& w) { c.output = as_string(v, w); });
    top.finish();

    if (c.sweep.empty()) {
        // A single point at the configured value of the swept quantity.
        const std::string axis = sweep_axis(c.kind);
        if (axis == "m") {
            c.sweep = {static_cast<double>(c.m)};
        } else if (axis == "snr_db") {
            c.sweep = {c.snr_db};
        } else {
            c.sweep = {20.0};
        }
    }
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate(const ExperimentConfig& c)
{
    require(c.trials >= 1, "trials must be >= 1");
    require(!c.sweep.empty(), "sweep.values must not be empty");
    require(!c.matrices.empty(), "matrices must not be empty");
    const auto& sp = c.spectrum;
    require(sp.n >= 2, "spectrum.n must be >= 2");
    // Throws on size or probability errors.
    const auto part = make_block_partition(sp.n, sp.block_sizes, sp.block_probs);
    const auto kbar = average_block_sparsity(part);
    double total = 0.0;
    for (double k : kbar) {
        total += k;
    }
    require(total > 0.0 || c.kind == ExperimentKind::cooperative_round,
            "spectrum.block_probs: at least one block needs a positive probability");

    const std::string axis = sweep_axis(c.kind);
    for (double v : c.sweep) {
        require(!std::isnan(v), "sweep.values: NaN");
        if (axis == "m") {
            require(v >= 1 && v <= static_cast<double>(sp.n) && v == std::floor(v),
                    "sweep.values: m = " + format_double(v) + " must be an integer in [1, n]");
        } else if (axis == "attenuation_db") {
            require(std::isfinite(v) && v >= 0.0, "sweep.values: attenuation must be finite and >= 0");
        }
    }
    if (axis != "m") {
        require(c.m >= 1 && c.m <= sp.n, "m must lie in [1, n]");
    }
    require(!std::isnan(c.snr_db), "snr_db: NaN");

    const bool needs_solvers = c.kind != ExperimentKind::miss_detect_cdf &&
                               c.kind != ExperimentKind::cooperative_round;
    if (needs_solvers) {
        require(!c.solvers.empty(), "solvers must not be empty");
    }
    std::set<std::string> seen;
    for (const auto& s : c.solvers) {
        require(std::find(known_solvers().begin(), known_solvers().end(), s) != known_solvers().end(),
                "solvers: '" + s + "' is not implemented");
        require(seen.insert(s).second, "solvers: '" + s + "' listed twice");
    }
    const auto& so = c.solver;
    require(so.tolerance > 0.0 && so.max_iterations >= 1, "solver_params: bad tolerance or iterations");
    require(so.delta >= 0.0, "solver_params.delta must be >= 0");
    require(so.omp_kmax_fraction > 0.0 && so.omp_kmax_fraction <= 1.0,
            "solver_params.omp_kmax_fraction must lie in (0, 1]");
    require(so.cosamp_max_itr >= 1 && so.assamp_max_itr >= 1 && so.assamp_step >= 1,
            "solver_params: iteration counts and step must be >= 1");
    require(c.threshold > 0.0, "detection.threshold must be positive");

    if (c.kind == ExperimentKind::cooperative_round) {
        const auto& p = c.cooperative;
        require(p.num_sus >= 1, "cooperative.num_sus must be >= 1");
        require(p.branches >= 1 && p.scans >= 1, "cooperative: branches and scans must be >= 1");
        require(p.branches * p.scans <= sp.n, "cooperative: branches * scans must not exceed n");
        require(p.shadowed_band >= 0 && p.shadowed_band < sp.n, "cooperative.shadowed_band out of range");
        for (int s : p.shadowed_sus) {
            require(s >= 0 && s < p.num_sus, "cooperative.shadowed_sus: no SU " + std::to_string(s));
        }
        fusion_mode_from_string(p.mode);
        require(p.quorum > 0.0 && p.quorum <= 1.0, "cooperative.quorum must lie in (0, 1]");
        require(p.target_m >= 0, "cooperative.target_m must be >= 0");
    }
    if (c.kind == ExperimentKind::miss_detect_cdf) {
        const auto& p = c.prediction;
        require(p.windows >= 2, "prediction.windows must be >= 2");
        require(p.lag >= 1, "prediction.lag must be >= 1");
        require(p.warmup > p.lag, "prediction.warmup must exceed the lag");
        require(p.train_window > p.lag, "prediction.train_window must exceed the lag");
        require(p.refit_every >= 1, "prediction.refit_every must be >= 1");
        predictor_kind_from_string(p.predictor);
        require(p.learning_rate > 0.0 && p.epochs >= 0, "prediction: bad learning rate or epochs");
        require(p.svr_c > 0.0 && p.svr_tube >= 0.0, "prediction: bad SVR parameters");
        require(p.m_constant > 0.0, "prediction.m_constant must be positive");
        make_block_partition(sp.n, sp.block_sizes, p.end_probs);
    }
}

std::string canonical_json(const ExperimentConfig& c)
{
    Json j;
    j["experiment"] = to_string(c.kind);
    j["name"] = c.name;
    j["master_seed"] = c.master_seed;
    j["trials"] = c.trials;
    j["spectrum"] = {{"n", c.spectrum.n},
                     {"block_sizes", c.spectrum.block_sizes},
                     {"block_probs", c.spectrum.block_probs},
                     {"amplitude", to_string(c.spectrum.amplitude)}};
    Json mats = Json::array();
    for (auto k : c.matrices) {
        mats.push_back(to_string(k));
    }
    j["matrices"] = mats;
    j["m"] = c.m;
    j["snr_db"] = number_json(c.snr_db);
    Json values = Json::array();
    for (double v : c.sweep) {
        values.push_back(number_json(v));
    }
    j["sweep"] = {{"axis", sweep_axis(c.kind)}, {"values", values}};
    j["solvers"] = c.solvers;
    const auto& s = c.solver;
    j["solver_params"] = {{"tolerance", s.tolerance},
                          {"max_iterations", s.max_iterations},
                          {"delta", s.delta},
                          {"omp_kmax_fraction", s.omp_kmax_fraction},
                          {"cosamp_max_itr", s.cosamp_max_itr},
                          {"assamp_step", s.assamp_step},
                          {"assamp_max_itr", s.assamp_max_itr}};
    j["detection"] = {{"threshold", c.threshold}};
    const auto& co = c.cooperative;
    j["cooperative"] = {{"num_sus", co.num_sus},           {"branches", co.branches},
                        {"scans", co.scans},               {"shadowed_sus", co.shadowed_sus},
                        {"shadowed_band", co.shadowed_band}, {"mode", co.mode},
                        {"quorum", co.quorum},             {"target_m", co.target_m}};
    const auto& p = c.prediction;
    j["prediction"] = {{"windows", p.windows},
                       {"warmup", p.warmup},
                       {"train_window", p.train_window},
                       {"refit_every", p.refit_every},
                       {"lag", p.lag},
                       {"predictor", p.predictor},
                       {"learning_rate", p.learning_rate},
                       {"epochs", p.epochs},
                       {"svr_c", p.svr_c},
                       {"svr_tube", p.svr_tube},
                       {"m_constant", p.m_constant},
                       {"end_probs", p.end_probs}};
    j["output"] = c.output;
    return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config)
{
    const std::string text = canonical_json(config);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Trials

std::uint64_t trial_seed(std::uint64_t master, std::size_t sweep_index, long long trial)
{
    return derive_seed(master, {static_cast<std::uint64_t>(sweep_index), static_cast<std::uint64_t>(trial)});
}

namespace {

// Per-trial streams under the trial seed.
enum Stream : std::uint64_t { kInstance = 0, kMatrix = 1, kNoise = 2 };
// Hardware seeds of cooperative SUs live outside the (sweep, trial) tree.
constexpr std::uint64_t kSuHardware = 0xffffffffULL;

SpectrumInstance draw_occupied(const BlockPartition& part, AmplitudeModel amp, std::uint64_t seed)
{
    // nmse needs x != 0, so empty draws are redrawn on a fresh sub-stream.
    for (std::uint64_t attempt = 0; attempt < 10000; ++attempt) {
        auto inst = sample_instance(part, amp, derive_seed(seed, {kInstance, attempt}));
        if (inst.sparsity() > 0) {
            return inst;
        }
    }
    throw InvalidArgument("spectrum: occupancy probabilities too small to draw an occupied band");
}

struct Detection {
    long long occupied = 0;
    long long misses = 0;
    long long false_alarms = 0;
};

Detection score(const std::vector<bool>& decided, const std::vector<bool>& truth)
{
    Detection d;
    for (std::size_t b = 0; b < truth.size(); ++b) {
        if (truth[b]) {
            ++d.occupied;
            d.misses += decided[b] ? 0 : 1;
        } else {
            d.false_alarms += decided[b] ? 1 : 0;
        }
    }
    return d;
}

struct Problem {
    const BlockPartition* part;
    const std::vector<double>* weights;
    double kbar_total;
    SensingMatrix psi;
    CVector y;
    double epsilon;
    Index m;
};

RecoveryResult run_solver(const std::string& name, const Problem& p, const SolverParams& sp)
{
    const L1Options opts{sp.tolerance, sp.max_iterations};
    const RecoveryProblem rp{p.psi, p.y, p.epsilon, *p.weights};
    const double tol = std::max(p.epsilon, 1e-9 * p.y.norm());
    if (name == "lasso") {
        return solve_lasso(rp, opts);
    }
    if (name == "wlasso") {
        return solve_wlasso(rp, *p.part, opts);
    }
    if (name == "wlasso_scaled") {
        return solve_wlasso_scaled(rp, *p.part, opts);
    }
    if (name == "bp") {
        return solve_bp(p.psi, p.y, opts);
    }
    if (name == "omp") {
        const auto k = std::max<Index>(1, static_cast<Index>(std::floor(sp.omp_kmax_fraction * static_cast<double>(p.m))));
        return solve_omp(p.psi, p.y, std::min(k, p.m), tol);
    }
    if (name == "cosamp") {
        const auto k = std::clamp<Index>(std::lround(p.kbar_total), 1, p.m);
        return solve_cosamp(p.psi, p.y, k, sp.cosamp_max_itr, tol);
    }
    if (name == "assamp") {
        return solve_assamp(p.psi, p.y, sp.assamp_step, tol, sp.assamp_max_itr);
    }
    throw InvalidArgument("solver '" + name + "' is not implemented");
}

RecoveryResult run_solver_safely(const std::string& name, const Problem& p, const SolverParams& sp)
{
    try {
        return run_solver(name, p, sp);
    } catch (const std::exception&) {
        RecoveryResult failed;
        failed.z_star = CVector::Zero(p.psi.n());
        failed.residual_norm = p.y.norm();
        failed.converged = false;
        return failed;
    }
}

TrialRecord base_record(const ExperimentConfig& c, double sweep_value, long long trial,
                        std::uint64_t seed)
{
    TrialRecord r;
    r.experiment = to_string(c.kind);
    r.sweep_value = sweep_value;
    r.trial = trial;
    r.seed = seed;
    return r;
}

void fill_result(TrialRecord& r, const RecoveryResult& res, const SpectrumInstance& inst,
                 double threshold)
{
    r.nmse = nmse(res.z_star, inst.x);
    r.nmse_l2 = nmse_l2(res.z_star, inst.x);
    const auto d = score(decide_occupancy({res.z_star}, threshold), inst.occupancy);
    r.occupied = d.occupied;
    r.misses = d.misses;
    r.false_alarms = d.false_alarms;
    r.wall_time = res.wall_time;
    r.iterations = res.iterations;
    r.converged = res.converged;
}

double kbar_sum(const std::vector<double>& kbar)
{
    double t = 0.0;
    for (double k : kbar) {
        t += k;
    }
    return t;
}

std::vector<TrialRecord> sweep_trial(const ExperimentConfig& c, std::size_t s, long long t)
{
    const double value = c.sweep[s];
    const Index m = sweep_axis(c.kind) == "m" ? static_cast<Index>(value) : c.m;
    const double snr = sweep_axis(c.kind) == "snr_db" ? value : c.snr_db;
    const std::uint64_t seed = trial_seed(c.master_seed, s, t);
    const auto& sp = c.spectrum;
    const auto part = make_block_partition(sp.n, sp.block_sizes, sp.block_probs);
    const auto kbar = average_block_sparsity(part);
    const auto weights = design_weights(kbar);
    const auto inst = draw_occupied(part, sp.amplitude, seed);

    std::vector<TrialRecord> out;
    for (MatrixKind kind : c.matrices) {
        const auto phi = build_reduction(kind, m, sp.n, derive_seed(seed, {kMatrix}));
        const double sigma = sigma_for_snr(inst.x, phi, snr);
        const CVector noise = draw_time_noise(sp.n, NoiseModel{sigma}, derive_seed(seed, {kNoise}));
        const CVector r = inst.r + noise;
        Problem p{&part, &weights, kbar_sum(kbar), compose_sensing(phi), measure(phi, r),
                  noise_epsilon(sigma, phi, c.solver.delta), m};
        const double realized = snr_of(inst.x, measure(phi, noise));
        const double mu = c.kind == ExperimentKind::coherence_study ? coherence(p.psi) : -1.0;
        for (const auto& name : c.solvers) {
            TrialRecord rec = base_record(c, value, t, seed);
            rec.matrix = to_string(kind);
            rec.solver = name;
            rec.m = m;
            rec.snr_db = realized;
            rec.coherence = mu;
            fill_result(rec, run_solver_safely(name, p, c.solver), inst, c.threshold);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

// --- miss_detect_cdf -------------------------------------------------------

// Window u of the drifting scenario: u < warmup uses the start probabilities,
// then they move linearly to end_probs over the evaluation windows.
BlockPartition window_partition(const ExperimentConfig& c, long long u)
{
    const auto& sp = c.spectrum;
    const auto& p = c.prediction;
    const long long t = u - p.warmup;
    const double frac = t <= 0 ? 0.0 : static_cast<double>(t) / static_cast<double>(p.windows - 1);
    std::vector<double> probs(sp.block_probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) {
        probs[j] = sp.block_probs[j] + frac * (p.end_probs[j] - sp.block_probs[j]);
    }
    return make_block_partition(sp.n, sp.block_sizes, probs);
}

SpectrumInstance window_instance(const ExperimentConfig& c, std::size_t s, long long u)
{
    return draw_occupied(window_partition(c, u), c.spectrum.amplitude,
                         trial_seed(c.master_seed, s, u));
}

Predictor fit_window_predictor(const ExperimentConfig& c, const OccupancyHistory& h)
{
    const auto& p = c.prediction;
    if (predictor_kind_from_string(p.predictor) == PredictorKind::gd_linear) {
        return fit_gd(h, p.lag, GdOptions{p.learning_rate, p.epochs});
    }
    return fit_svr(h, p.lag, SvrOptions{p.svr_c, p.svr_tube, 0.5, p.epochs});
}

std::vector<TrialRecord> drift_trial(const ExperimentConfig& c, std::size_t s, long long t)
{
    const auto& sp = c.spectrum;
    const auto& p = c.prediction;
    const double snr = c.sweep[s];
    const long long u = p.warmup + t;

    // Realized counts of every earlier window are reproducible from their seeds.
    const long long refit_at = p.warmup + (t / p.refit_every) * p.refit_every;
    const long long train_from = std::max<long long>(0, refit_at - p.train_window);
    OccupancyHistory train(sp.block_sizes);
    for (long long v = train_from; v < refit_at; ++v) {
        const auto inst = window_instance(c, s, v);
        const auto counts = block_counts(window_partition(c, v), inst.occupancy);
        train.append(std::vector<double>(counts.begin(), counts.end()));
    }
    const Predictor pred = fit_window_predictor(c, train);
    std::vector<std::vector<double>> recent(sp.block_sizes.size());
    for (long long v = u - p.lag; v < u; ++v) {
        const auto inst = window_instance(c, s, v);
        const auto counts = block_counts(window_partition(c, v), inst.occupancy);
        for (std::size_t j = 0; j < counts.size(); ++j) {
            recent[j].push_back(static_cast<double>(counts[j]));
        }
    }
    const auto k_pred = predict_sparsity(pred, recent);
    const auto k_stale = average_block_sparsity(window_partition(c, 0));

    const auto part = window_partition(c, u);
    const auto inst = window_instance(c, s, u);
    const std::uint64_t seed = trial_seed(c.master_seed, s, u);

    std::vector<TrialRecord> out;
    for (const auto& [arm, kbar] : {std::pair{std::string("predicted"), k_pred},
                                    std::pair{std::string("stale"), k_stale}}) {
        const auto weights = design_weights(kbar);
        const Index m = required_measurements(kbar_sum(kbar), sp.n, p.m_constant);
        const auto phi = build_reduction(c.matrices.front(), m, sp.n, derive_seed(seed, {kMatrix}));
        const double sigma = sigma_for_snr(inst.x, phi, snr);
        const CVector noise = draw_time_noise(sp.n, NoiseModel{sigma}, derive_seed(seed, {kNoise}));
        Problem prob{&part, &weights, kbar_sum(kbar), compose_sensing(phi),
                     measure(phi, CVector(inst.r + noise)), noise_epsilon(sigma, phi, c.solver.delta), m};
        TrialRecord rec = base_record(c, snr, t, seed);
        rec.matrix = to_string(c.matrices.front());
        rec.arm = arm;
        rec.solver = "wlasso";
        rec.m = m;
        rec.snr_db = snr_of(inst.x, measure(phi, noise));
        fill_result(rec, run_solver_safely("wlasso", prob, c.solver), inst, c.threshold);
        out.push_back(std::move(rec));
    }
    return out;
}

// --- cooperative_round -----------------------------------------------------

struct RoundRun {
    std::vector<TrialRecord> records;
    std::vector<FusionLogRow> log;
};

RoundRun cooperative_trial(const ExperimentConfig& c, std::size_t s, long long t)
{
    const auto& sp = c.spectrum;
    const auto& cp = c.cooperative;
    const double attenuation = c.sweep[s];
    const std::uint64_t seed = trial_seed(c.master_seed, s, t);

    auto base = make_block_partition(sp.n, sp.block_sizes, sp.block_probs);
    std::vector<double> probs = base.probs();
    probs[static_cast<std::size_t>(cp.shadowed_band)] = 1.0;
    const auto part = make_band_partition(sp.block_sizes, probs);
    const auto weights = design_weights(average_block_sparsity(part));
    const auto inst = sample_instance(part, sp.amplitude, derive_seed(seed, {kInstance}));

    std::vector<SecondaryUser> sus;
    for (int i = 0; i < cp.num_sus; ++i) {
        SecondaryUser su;
        su.id = i;
        su.branches = cp.branches;
        su.scans = cp.scans;
        su.channel_gains = flat_gains(sp.n);
        if (std::find(cp.shadowed_sus.begin(), cp.shadowed_sus.end(), i) != cp.shadowed_sus.end()) {
            su.channel_gains[cp.shadowed_band] = std::pow(10.0, -attenuation / 10.0);
        }
        su.seed = derive_seed(c.master_seed, {kSuHardware, static_cast<std::uint64_t>(i)});
        sus.push_back(std::move(su));
    }
    const auto ref = bank_to_reduction(make_pn_bank(sus.front().rows_per_round(), sp.n, sus.front().seed));
    const double sigma = sigma_for_snr(inst.x, ref, c.snr_db);

    CooperativeSettings settings;
    settings.mode = fusion_mode_from_string(cp.mode);
    settings.quorum = cp.quorum;
    settings.target_m = cp.target_m;
    settings.threshold = c.threshold;
    settings.delta = c.solver.delta;
    const long long round = static_cast<long long>(s) * c.trials + t;
    const auto outcome = run_round(static_cast<int>(round), sus, inst, part, weights, sigma,
                                   settings, derive_seed(seed, {kNoise}));

    const auto band = static_cast<std::size_t>(cp.shadowed_band);
    RoundRun run;
    run.log = outcome.log;
    const auto add = [&](const std::string& arm, const RecoveryResult* res,
                         const std::vector<bool>& decided, Index rows) {
        TrialRecord rec = base_record(c, attenuation, t, seed);
        rec.matrix = "bernoulli";
        rec.arm = arm;
        rec.solver = settings.mode == FusionMode::vote && arm == "fused" ? "vote" : "wlasso";
        rec.m = rows;
        rec.snr_db = c.snr_db;
        if (res != nullptr) {
            fill_result(rec, *res, inst, c.threshold);
        } else {
            rec.nmse = kNan;
            rec.nmse_l2 = kNan;
            rec.converged = true;
        }
        const auto d = score(decided, inst.occupancy);
        rec.occupied = d.occupied;
        rec.misses = d.misses;
        rec.false_alarms = d.false_alarms;
        rec.tracked_miss = decided.empty() ? -1 : (decided[band] ? 0 : 1);
        run.records.push_back(std::move(rec));
    };
    const Index rows_each = cp.branches * cp.scans;
    for (std::size_t i = 0; i < outcome.local.size(); ++i) {
        add("su" + std::to_string(outcome.su_ids[i]), &outcome.local_results[i], outcome.local[i],
            rows_each);
    }
    if (!outcome.fused.empty()) {
        add("fused", outcome.pooled ? &*outcome.pooled : nullptr, outcome.fused,
            outcome.pooled ? rows_each * cp.num_sus : 0);
    }
    return run;
}

}  // namespace

std::vector<TrialRecord> run_trial(const ExperimentConfig& config, std::size_t sweep_index,
                                   long long trial)
{
    require(sweep_index < config.sweep.size(), "run_trial: sweep index out of range");
    const long long limit =
        config.kind == ExperimentKind::miss_detect_cdf ? config.prediction.windows : config.trials;
    require(trial >= 0 && trial < limit, "run_trial: trial index out of range");
    switch (config.kind) {
    case ExperimentKind::miss_detect_cdf:
        return drift_trial(config, sweep_index, trial);
    case ExperimentKind::cooperative_round:
        return cooperative_trial(config, sweep_index, trial).records;
    default:
        return sweep_trial(config, sweep_index, trial);
    }
}

ExperimentResult run_experiment(const ExperimentConfig& config)
{
    validate(config);
    ExperimentResult result;
    const long long trials =
        config.kind == ExperimentKind::miss_detect_cdf ? config.prediction.windows : config.trials;
    for (std::size_t s = 0; s < config.sweep.size(); ++s) {
        for (long long t = 0; t < trials; ++t) {
            if (config.kind == ExperimentKind::cooperative_round) {
                auto run = cooperative_trial(config, s, t);
                for (const auto& row : run.log) {
                    result.fusion_log.push_back(std::to_string(row.round) + "," + row.su_id + "," +
                                                std::to_string(row.rows_contributed) + "," +
                                                row.decision_hash);
                }
                std::move(run.records.begin(), run.records.end(), std::back_inserter(result.records));
            } else {
                auto recs = run_trial(config, s, t);
                std::move(recs.begin(), recs.end(), std::back_inserter(result.records));
            }
        }
    }
    result.summary = summarize(result.records, config.spectrum.n);
    return result;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

struct MeanSe {
    double mean = kNan;
    double se = kNan;
    long long count = 0;
};

MeanSe mean_se(const std::vector<double>& v)
{
    MeanSe out;
    std::vector<double> f;
    for (double x : v) {
        if (std::isfinite(x)) {
            f.push_back(x);
        }
    }
    out.count = static_cast<long long>(f.size());
    if (f.empty()) {
        return out;
    }
    double sum = 0.0;
    for (double x : f) {
        sum += x;
    }
    out.mean = sum / static_cast<double>(f.size());
    if (f.size() < 2) {
        out.se = 0.0;
        return out;
    }
    double ss = 0.0;
    for (double x : f) {
        ss += (x - out.mean) * (x - out.mean);
    }
    out.se = std::sqrt(ss / static_cast<double>(f.size() - 1) / static_cast<double>(f.size()));
    return out;
}

double median(std::vector<double> v)
{
    if (v.empty()) {
        return kNan;
    }
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

using GroupKey = std::tuple<double, std::string, std::string, std::string>;

GroupKey key_of(const TrialRecord& r)
{
    return {r.sweep_value, r.matrix, r.arm, r.solver};
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records, Index n)
{
    std::vector<GroupKey> order;
    std::map<GroupKey, std::vector<const TrialRecord*>> groups;
    for (const auto& r : records) {
        auto k = key_of(r);
        auto [it, fresh] = groups.try_emplace(k);
        if (fresh) {
            order.push_back(k);
        }
        it->second.push_back(&r);
    }
    // wlasso error per (sweep, matrix, arm, trial), for pairing
    std::map<std::tuple<double, std::string, std::string, long long>, double> wl;
    for (const auto& r : records) {
        if (r.solver == "wlasso") {
            wl[{r.sweep_value, r.matrix, r.arm, r.trial}] = r.nmse;
        }
    }

    std::vector<SummaryRow> out;
    for (const auto& k : order) {
        const auto& g = groups[k];
        SummaryRow row;
        std::tie(row.sweep_value, row.matrix, row.arm, row.solver) = k;
        row.count = static_cast<long long>(g.size());
        std::vector<double> e, e2, frac, tracked, coh, gains;
        long long occ = 0, miss = 0, fa = 0, vacant = 0, conv = 0;
        double time = 0.0, iters = 0.0, mm = 0.0;
        for (const auto* r : g) {
            e.push_back(r->nmse);
            e2.push_back(r->nmse_l2);
            occ += r->occupied;
            miss += r->misses;
            fa += r->false_alarms;
            vacant += n - r->occupied;
            if (r->occupied > 0) {
                frac.push_back(static_cast<double>(r->misses) / static_cast<double>(r->occupied));
            }
            if (r->tracked_miss >= 0) {
                tracked.push_back(static_cast<double>(r->tracked_miss));
            }
            if (r->coherence >= 0.0) {
                coh.push_back(r->coherence);
            }
            time += r->wall_time;
            iters += static_cast<double>(r->iterations);
            mm += static_cast<double>(r->m);
            conv += r->converged ? 1 : 0;
            if (r->solver != "wlasso") {
                const auto it = wl.find({r->sweep_value, r->matrix, r->arm, r->trial});
                if (it != wl.end() && std::isfinite(r->nmse) && r->nmse > 0.0 &&
                    std::isfinite(it->second)) {
                    gains.push_back(error_gain(r->nmse, it->second));
                }
            }
        }
        const double cnt = static_cast<double>(g.size());
        const auto me = mean_se(e);
        const auto me2 = mean_se(e2);
        row.mean_nmse = me.mean;
        row.se_nmse = me.se;
        row.mean_nmse_l2 = me2.mean;
        row.se_nmse_l2 = me2.se;
        row.miss_rate = occ > 0 ? static_cast<double>(miss) / static_cast<double>(occ) : kNan;
        row.median_miss_rate = median(frac);
        row.false_alarm_rate = vacant > 0 ? static_cast<double>(fa) / static_cast<double>(vacant) : kNan;
        row.tracked_miss_rate = tracked.empty() ? -1.0 : mean_se(tracked).mean;
        row.mean_m = mm / cnt;
        row.mean_coherence = coh.empty() ? -1.0 : mean_se(coh).mean;
        row.mean_time = time / cnt;
        row.mean_iterations = iters / cnt;
        row.converged_fraction = static_cast<double>(conv) / cnt;
        const auto mg = mean_se(gains);
        row.gain_vs_wlasso = mg.mean;
        row.gain_lower95 = mg.count > 0 ? mg.mean - 1.645 * mg.se : kNan;
        out.push_back(row);
    }
    return out;
}

TimingTable timing_table(const std::vector<TrialRecord>& records)
{
    TimingTable table;
    std::vector<std::string> order;
    std::map<std::string, TimingRow> rows;
    for (const auto& r : records) {
        auto [it, fresh] = rows.try_emplace(r.solver);
        if (fresh) {
            order.push_back(r.solver);
            it->second.solver = r.solver;
        }
        auto& row = it->second;
        row.count += 1;
        row.mean_time += r.wall_time;
        row.mean_iterations += static_cast<double>(r.iterations);
    }
    for (const auto& name : order) {
        auto row = rows[name];
        row.mean_time /= static_cast<double>(row.count);
        row.mean_iterations /= static_cast<double>(row.count);
        table.rows.push_back(row);
    }
    const auto time_of = [&](const std::string& s) {
        const auto it = rows.find(s);
        return it == rows.end() ? kNan : it->second.mean_time / static_cast<double>(it->second.count);
    };
    table.wlasso_lasso_ratio = time_of("wlasso") / time_of("lasso");
    table.ratio_ok = table.wlasso_lasso_ratio >= 1.0 / 1.5 && table.wlasso_lasso_ratio <= 1.5;
    table.omp_before_cosamp = time_of("omp") < time_of("cosamp");
    table.cosamp_before_lasso = time_of("cosamp") < time_of("lasso");
    return table;
}

TimingTable timing_table(const ExperimentConfig& config)
{
    require(!config.solvers.empty(), "timing_table: empty solver list");
    return timing_table(run_experiment(config).records);
}

// ---------------------------------------------------------------------------
// CSV

const char* const kRecordsHeader =
    "experiment,sweep_value,matrix,arm,trial,seed,solver,m,snr_db,nmse,nmse_l2,occupied,misses,"
    "false_alarms,tracked_miss,coherence,wall_time,iterations,converged";

const char* const kSummaryHeader =
    "sweep_value,matrix,arm,solver,count,mean_nmse,se_nmse,mean_nmse_l2,se_nmse_l2,miss_rate,"
    "median_miss_rate,false_alarm_rate,tracked_miss_rate,mean_m,mean_coherence,mean_time,"
    "mean_iterations,converged_fraction,gain_vs_wlasso,gain_lower95";

namespace {

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot open '" + path.string() + "' for writing");
    return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    require(static_cast<bool>(out), "write to '" + path.string() + "' failed");
}

}  // namespace

void emit_csv(const std::vector<TrialRecord>& records, const std::filesystem::path& path)
{
    require(!records.empty(), "emit_csv: no records");
    auto out = open_out(path);
    out << kRecordsHeader << '\n';
    for (const auto& r : records) {
        out << r.experiment << ',' << format_double(r.sweep_value) << ',' << r.matrix << ','
            << r.arm << ',' << r.trial << ',' << r.seed << ',' << r.solver << ',' << r.m << ','
            << format_double(r.snr_db) << ',' << format_double(r.nmse) << ','
            << format_double(r.nmse_l2) << ',' << r.occupied << ',' << r.misses << ','
            << r.false_alarms << ',' << r.tracked_miss << ',' << format_double(r.coherence) << ','
            << format_double(r.wall_time) << ',' << r.iterations << ',' << (r.converged ? 1 : 0)
            << '\n';
    }
    check_written(out, path);
}

std::vector<TrialRecord> parse_records_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open '" + path.string() + "'");
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == kRecordsHeader,
            "records csv: header does not match the schema");
    std::vector<TrialRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split(line, ',');
        require(f.size() == 19, "records csv: expected 19 fields in '" + line + "'");
        TrialRecord r;
        r.experiment = f[0];
        r.sweep_value = parse_double(f[1]);
        r.matrix = f[2];
        r.arm = f[3];
        r.trial = parse_int(f[4]);
        r.seed = std::stoull(f[5]);
        r.solver = f[6];
        r.m = parse_int(f[7]);
        r.snr_db = parse_double(f[8]);
        r.nmse = parse_double(f[9]);
        r.nmse_l2 = parse_double(f[10]);
        r.occupied = parse_int(f[11]);
        r.misses = parse_int(f[12]);
        r.false_alarms = parse_int(f[13]);
        r.tracked_miss = parse_int(f[14]);
        r.coherence = parse_double(f[15]);
        r.wall_time = parse_double(f[16]);
        r.iterations = parse_int(f[17]);
        r.converged = parse_int(f[18]) != 0;
        out.push_back(std::move(r));
    }
    return out;
}

void emit_summary(const std::vector<SummaryRow>& summary, const ExperimentConfig& config,
                  const std::filesystem::path& path)
{
    require(!summary.empty(), "emit_summary: no rows");
    auto out = open_out(path);
    out << "# config_hash=" << config_hash(config) << '\n';
    out << "# master_seed=" << config.master_seed << '\n';
    out << "# experiment=" << to_string(config.kind) << " name=" << config.name << '\n';
    out << kSummaryHeader << '\n';
    for (const auto& s : summary) {
        out << format_double(s.sweep_value) << ',' << s.matrix << ',' << s.arm << ',' << s.solver
            << ',' << s.count << ',' << format_double(s.mean_nmse) << ','
            << format_double(s.se_nmse) << ',' << format_double(s.mean_nmse_l2) << ','
            << format_double(s.se_nmse_l2) << ',' << format_double(s.miss_rate) << ','
            << format_double(s.median_miss_rate) << ',' << format_double(s.false_alarm_rate) << ','
            << format_double(s.tracked_miss_rate) << ',' << format_double(s.mean_m) << ','
            << format_double(s.mean_coherence) << ',' << format_double(s.mean_time) << ','
            << format_double(s.mean_iterations) << ',' << format_double(s.converged_fraction)
            << ',' << format_double(s.gain_vs_wlasso) << ',' << format_double(s.gain_lower95)
            << '\n';
    }
    check_written(out, path);
}

void write_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                   const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, "cannot create output directory '" + dir.string() + "': " + ec.message());
    emit_csv(result.records, dir / "records.csv");
    emit_summary(result.summary, config, dir / "summary.csv");
    {
        auto out = open_out(dir / "config_echo.json");
        out << canonical_json(config);
        check_written(out, dir / "config_echo.json");
    }
    if (config.kind == ExperimentKind::miss_detect_cdf) {
        auto out = open_out(dir / "cdf.csv");
        out << "arm,miss_rate,cdf\n";
        for (const std::string arm : {"predicted", "stale"}) {
            std::vector<double> frac;
            for (const auto& r : result.records) {
                if (r.arm == arm && r.occupied > 0) {
                    frac.push_back(static_cast<double>(r.misses) / static_cast<double>(r.occupied));
                }
            }
            std::sort(frac.begin(), frac.end());
            for (std::size_t i = 0; i < frac.size(); ++i) {
                out << arm << ',' << format_double(frac[i]) << ','
                    << format_double(static_cast<double>(i + 1) / static_cast<double>(frac.size()))
                    << '\n';
            }
        }
        check_written(out, dir / "cdf.csv");
    }
    if (config.kind == ExperimentKind::cooperative_round) {
        auto out = open_out(dir / "fusion_log.csv");
        out << "round,su_id,rows_contributed,decision_hash\n";
        for (const auto& line : result.fusion_log) {
            out << line << '\n';
        }
        check_written(out, dir / "fusion_log.csv");
    }
}

}  // namespace widescan
