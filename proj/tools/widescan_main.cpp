// widescan: runs Monte Carlo experiments from JSON configs.
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad arguments or config, 4 timing
// assertions failed.

#include "widescan/harness.hpp"
#include "widescan/text.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iomanip>
#include <iostream>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTimingFailed = 4;

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> solvers;
    std::optional<int> trials;
};

widescan::ExperimentConfig load(const RunArgs& a)
{
    auto c = widescan::load_config(a.config);
    if (a.seed) {
        c.master_seed = *a.seed;
    }
    if (a.out) {
        c.output = *a.out;
    }
    if (!a.solvers.empty()) {
        c.solvers = a.solvers;
    }
    if (a.trials) {
        c.trials = *a.trials;
    }
    widescan::validate(c);
    return c;
}

void print_summary(const std::vector<widescan::SummaryRow>& rows)
{
    std::cout << std::left << std::setw(10) << "sweep" << std::setw(11) << "matrix"
              << std::setw(10) << "arm" << std::setw(15) << "solver" << std::setw(13) << "nmse"
              << std::setw(11) << "miss" << std::setw(11) << "gain_lb95" << "time_s\n";
    for (const auto& r : rows) {
        std::cout << std::left << std::setw(10) << widescan::format_double(r.sweep_value)
                  << std::setw(11) << r.matrix << std::setw(10) << r.arm << std::setw(15)
                  << r.solver << std::setw(13) << std::setprecision(4) << r.mean_nmse
                  << std::setw(11) << r.miss_rate << std::setw(11) << r.gain_lower95
                  << r.mean_time << '\n';
    }
}

int cmd_run(const RunArgs& a)
{
    const auto c = load(a);
    const auto result = widescan::run_experiment(c);
    widescan::write_outputs(result, c, c.output);
    print_summary(result.summary);
    std::cout << "wrote " << result.records.size() << " records to " << c.output << '\n';
    return 0;
}

int cmd_timing(const RunArgs& a)
{
    const auto c = load(a);
    const auto t = widescan::timing_table(c);
    std::cout << std::left << std::setw(15) << "solver" << std::setw(8) << "trials"
              << std::setw(14) << "mean_time_s" << "mean_iterations\n";
    for (const auto& r : t.rows) {
        std::cout << std::left << std::setw(15) << r.solver << std::setw(8) << r.count
                  << std::setw(14) << std::setprecision(4) << r.mean_time << r.mean_iterations
                  << '\n';
    }
    const auto mark = [](bool ok) { return ok ? "ok" : "FAILED"; };
    std::cout << "wlasso/lasso time ratio " << t.wlasso_lasso_ratio << " (within [1/1.5, 1.5]: "
              << mark(t.ratio_ok) << ")\n"
              << "omp faster than cosamp: " << mark(t.omp_before_cosamp) << '\n'
              << "cosamp faster than lasso: " << mark(t.cosamp_before_lasso) << '\n';
    const bool ok = t.ratio_ok && t.omp_before_cosamp && t.cosamp_before_lasso;
    return ok ? 0 : kExitTimingFailed;
}

void add_common(CLI::App* sub, RunArgs& a)
{
    sub->add_option("config", a.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed, "override master_seed");
    sub->add_option("--solvers", a.solvers, "override the solver list")->delimiter(',');
    sub->add_option("--trials", a.trials, "override the trial count")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Wideband spectrum sensing experiments"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "run an experiment and write CSV outputs");
    add_common(run, run_args);
    run->add_option("--out", run_args.out, "output directory (default: config 'output')");

    RunArgs timing_args;
    auto* timing = app.add_subcommand("timing", "print mean solver run times and check their order");
    add_common(timing, timing_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) {
            return cmd_run(run_args);
        }
        return cmd_timing(timing_args);
    } catch (const widescan::InvalidArgument& e) {
        std::cerr << "widescan: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "widescan: " << e.what() << '\n';
        return kExitRuntime;
    }
}
