// Command-line front end: esagg <command> scenario.json [flags]
//
// Exit status: 0 ok, 2 invalid input, 3 infeasible dispatch, 4 search
// budget exhausted, 1 anything else.

#include <fmt/format.h>

#include <iostream>

#include "CLI11.hpp"
#include "esagg/io.hpp"

namespace {

enum Exit { ok = 0, other = 1, invalid = 2, infeasible = 3, budget = 4 };

int classify(std::exception_ptr error) {
    try {
        std::rethrow_exception(error);
    } catch (const esagg::StageError& e) {
        return e.cause() ? classify(e.cause()) : other;
    } catch (const esagg::ValidationError&) {
        return invalid;
    } catch (const esagg::ParseError&) {
        return invalid;
    } catch (const esagg::VersionError&) {
        return invalid;
    } catch (const esagg::InfeasibleDispatch&) {
        return infeasible;
    } catch (const esagg::solver::Infeasible&) {
        return infeasible;
    } catch (...) {
        return other;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Storage aggregator market simulator"};
    app.require_subcommand(1);

    esagg::PipelineSettings settings;
    std::string out_dir = ".";
    double delta = 0.0;
    double tol = settings.search.solver.kkt_tolerance;
    app.add_option("--tol", tol, "KKT residual tolerance of the convex solver")->check(CLI::PositiveNumber);
    app.add_option("--grid-res", settings.search.grid_resolution, "final price step of the leader search")
        ->check(CLI::PositiveNumber);
    app.add_option("--multistart", settings.search.multistart, "starting points of the leader search")
        ->check(CLI::PositiveNumber);
    app.add_option("--max-evaluations", settings.search.max_evaluations, "follower re-solves before giving up");
    auto* delta_opt = app.add_option("--delta", delta, "discount rate of the repeated game, overrides the scenario");
    app.add_option("--out-dir", out_dir, "directory for result files");
    app.add_option("--seed", settings.search.seed, "seed for randomized starting points");
    app.add_option("--threads", settings.search.threads, "worker threads, 0 = all cores");
    app.add_flag("--zero-storage", settings.zero_storage, "clear: dispatch with every unit idle");

    std::string scenario_path;
    std::string command;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"clear", "clear the market at the aggregate optimum (or with idle storage)"},
        {"stackelberg", "single-shot leader/follower price setting"},
        {"cooperate", "cooperation margins and region in the repeated game"},
        {"bargain", "Nash bargaining over prices at the aggregate optimum"},
        {"social", "system-cost-minimizing storage dispatch"},
        {"mpmp", "dispatch under the market-power-mitigating payment"},
        {"compare", "social optimum against market clearing"},
        {"sweep", "cost/profit curves, cooperation region and bargaining frontier as CSV"},
        {"validate", "check a scenario file"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->fallthrough();
        sub->add_option("scenario", scenario_path, "scenario JSON file")->required();
        sub->callback([&command, n = name] { command = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : invalid;
    }
    settings.search.solver.kkt_tolerance = tol;
    settings.out_dir = out_dir;
    if (delta_opt->count() > 0) settings.discount = delta;

    try {
        const esagg::Scenario scenario = esagg::load_scenario(scenario_path);
        if (command == "validate") {
            fmt::print("{}: valid ({} buses, {} periods, {} units)\nsha256 {}\n",
                       scenario.name.empty() ? scenario_path : scenario.name, scenario.network.n_buses,
                       scenario.network.horizon(), scenario.units.size(), esagg::scenario_hash(scenario));
            return ok;
        }
        const esagg::RunRecord record = esagg::run_pipeline(scenario, command, settings, std::cout);
        if (record.budget_exceeded) {
            std::cerr << "search budget exhausted; best outcome found was reported\n";
            return budget;
        }
        return ok;
    } catch (...) {
        const auto error = std::current_exception();
        try {
            std::rethrow_exception(error);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
        }
        return classify(error);
    }
}
