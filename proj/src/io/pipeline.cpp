#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <chrono>
#include <functional>
#include <fstream>
#include <ostream>

#include "esagg/io.hpp"
#include "json.hpp"

namespace esagg {
namespace {

using Json = nlohmann::ordered_json;

Json to_json(const Vector& v) {
    Json a = Json::array();
    for (Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

Json to_json(const Matrix& m) {
    Json a = Json::array();
    for (Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
    return a;
}

Json schedules_json(const std::vector<StorageUnit>& units, const std::vector<StorageSchedule>& schedules) {
    Json a = Json::array();
    for (std::size_t i = 0; i < schedules.size(); ++i) {
        a.push_back({{"unit", units[i].id}, {"d_plus", to_json(schedules[i].d_plus)},
                     {"d_minus", to_json(schedules[i].d_minus)}, {"net", to_json(schedules[i].net())}});
    }
    return a;
}

Json prices_json(const std::vector<StorageUnit>& units, const std::vector<PriceSchedule>& prices) {
    Json a = Json::array();
    for (std::size_t i = 0; i < prices.size(); ++i) a.push_back({{"unit", units[i].id}, {"tau", to_json(prices[i].tau)}});
    return a;
}

Json market_json(const MarketOutcome& m) {
    return {{"generation", to_json(m.generation)}, {"lmps", to_json(m.lmps)},
            {"generation_cost", m.generation_cost}, {"storage_cost", m.storage_cost},
            {"system_cost", m.system_cost}, {"kkt_residual", m.kkt_residual}};
}

Json welfare_json(const WelfareReport& w) {
    return {{"cost_no_storage", w.cost_no_storage}, {"cost_at_actions", w.cost_at_actions},
            {"cost_social", w.cost_social}, {"aggregate_profit", w.agg_su_profit},
            {"load_payment", w.load_payment}};
}

template <class F>
auto stage(const std::string& name, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        throw StageError(name, std::current_exception(), e.what());
    }
}

class Run {
public:
    Run(const Scenario& scenario, const PipelineSettings& settings, std::ostream& console)
        : scenario_(scenario),
          settings_(settings),
          console_(console),
          units_(scenario.managed_units()),
          discount_(settings.discount.value_or(scenario.discount)) {}

    RunRecord record;
    Json outputs = Json::object();

    void write_csv(const std::string& name, const std::function<void(std::ostream&)>& writer) {
        const auto path = settings_.out_dir / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path.string());
        writer(out);
        record.files.push_back(path);
    }

    void clear() {
        std::vector<StorageSchedule> schedules(units_.size(), StorageSchedule::zero(horizon()));
        std::string at = "zero storage";
        if (!settings_.zero_storage) {
            schedules = optimum().schedules;
            at = "aggregate optimum";
        }
        const MarketOutcome m = stage("market_clearing", [&] {
            return clear_market(scenario_.network, scenario_.demand, injections(schedules),
                                storage_costs(schedules), solver());
        });
        outputs["dispatch"] = at;
        outputs["schedules"] = schedules_json(units_, schedules);
        outputs["market"] = market_json(m);
        fmt::print(console_, "cleared at {}: system cost {:.6f}, generation cost {:.6f}\n", at, m.system_cost,
                   m.generation_cost);
    }

    void stackelberg() {
        const GameOutcome g = stage("aggregator_game", [&] {
            return solve_stackelberg(scenario_.network, scenario_.demand, units_, scenario_.aggregator,
                                     settings_.search);
        });
        record.budget_exceeded = !g.equilibrium;
        outputs["status"] = g.status;
        outputs["prices"] = prices_json(units_, g.prices);
        outputs["schedules"] = schedules_json(units_, g.schedules);
        outputs["agg_profit"] = g.agg_profit;
        outputs["su_profits"] = g.su_profits;
        outputs["lmps"] = to_json(g.lmps_at_outcome);
        outputs["evaluations"] = g.evaluations;
        outputs["tied_alternatives"] = g.alternatives.size();
        fmt::print(console_, "{}: aggregator profit {:.6f}\n", g.status, g.agg_profit);
        for (std::size_t i = 0; i < units_.size(); ++i) {
            fmt::print(console_, "  {}: profit {:.6f}", units_[i].id, g.su_profits[i]);
            if (horizon() == 2) {
                fmt::print(console_, ", dtau {:.6f}", two_period_dtau(units_[i], g.prices[i]));
            }
            fmt::print(console_, "\n");
        }
    }

    void cooperate() {
        const BargainingOutcome b = bargain_outcome();
        const RepeatedGameConfig repeated{discount_, b.agreed_prices, b.agreed_schedules};
        const CooperationReport r = stage("cooperation", [&] {
            return cooperation_margins(scenario_.network, scenario_.demand, units_, scenario_.aggregator, repeated,
                                       settings_.search);
        });
        outputs["discount"] = discount_;
        outputs["agreed_prices"] = prices_json(units_, b.agreed_prices);
        outputs["agreed_schedules"] = schedules_json(units_, b.agreed_schedules);
        outputs["agg_margins"] = r.agg_margins;
        outputs["su_margins"] = r.su_margins;
        outputs["cooperative"] = r.cooperative;
        fmt::print(console_, "agreement at the bargaining point is {}\n", r.cooperative ? "cooperative" : "not cooperative");
        if (scalar()) {
            const ScalarCooperation game = scalar_game();
            const double x_hat = b.agreed_schedules.front().d_minus(0);
            const CooperationInterval iv = stage("cooperation", [&] { return cooperation_interval(game, x_hat); });
            outputs["interval"] = {{"x_hat", x_hat}, {"empty", iv.empty}, {"lower", iv.lower}, {"upper", iv.upper},
                                   {"lower_binding", iv.lower_binding}, {"upper_binding", iv.upper_binding}};
            if (!iv.empty) {
                fmt::print(console_, "cooperative dtau at x = {:.6f}: [{:.6f}, {:.6f}] (bounds set by {} and {})\n",
                           x_hat, iv.lower, iv.upper, iv.lower_binding, iv.upper_binding);
            }
            region(game);
        }
    }

    void bargain() {
        const BargainingOutcome b = bargain_outcome();
        outputs["aggregate_optimum"] = {{"profit", optimum().profit}, {"revenue", optimum().revenue}};
        outputs["agreed_prices"] = prices_json(units_, b.agreed_prices);
        outputs["agreed_schedules"] = schedules_json(units_, b.agreed_schedules);
        outputs["agg_profit"] = b.agg_profit;
        outputs["su_profits"] = b.su_profits;
        outputs["sweeps"] = b.sweeps;
        outputs["converged"] = b.converged;
        Json slices = Json::array();
        for (std::size_t i = 0; i < b.slices.size(); ++i) {
            const auto& s = b.slices[i];
            Json j{{"unit", units_[i].id}, {"payment", s.payment}, {"payment_min", s.payment_min},
                   {"payment_max", s.payment_max}, {"su_profit", s.su_profit}, {"agg_profit", s.agg_profit},
                   {"nash_product", s.nash_product}, {"interior", s.interior},
                   {"disagreement", {{"agg_profit", s.disagreement.agg_profit},
                                     {"su_profit", s.disagreement.su_profit}}}};
            if (horizon() == 2) j["dtau"] = two_period_dtau(units_[i], s.prices);
            slices.push_back(j);
            fmt::print(console_, "{}: payment {:.6f}, unit profit {:.6f}, aggregator share {:.6f}", units_[i].id,
                       s.payment, s.su_profit, s.agg_profit);
            if (horizon() == 2) fmt::print(console_, ", dtau {:.6f}", two_period_dtau(units_[i], s.prices));
            fmt::print(console_, "\n");
        }
        outputs["slices"] = slices;
        frontier(b);
    }

    void social() {
        const SocialOptimum so = stage("welfare", [&] {
            return social_optimum(scenario_.network, scenario_.demand, units_, solver());
        });
        const WelfareReport w = stage("welfare", [&] {
            return welfare_report(scenario_.network, scenario_.demand, units_, so.schedules, solver());
        });
        outputs["schedules"] = schedules_json(units_, so.schedules);
        outputs["generation"] = to_json(so.generation);
        outputs["system_cost"] = so.system_cost;
        outputs["welfare"] = welfare_json(w);
        fmt::print(console_, "social optimum: system cost {:.6f} (no storage {:.6f})\n", so.system_cost,
                   w.cost_no_storage);
    }

    void mpmp() {
        const MpmpConfig config = scenario_.mpmp.value_or(
            MpmpConfig{Matrix::Zero(scenario_.network.n_buses, horizon())});
        const MpmpOutcome m = stage("welfare", [&] {
            return clear_with_mpmp(scenario_.network, scenario_.demand, units_, config, solver());
        });
        outputs["schedules"] = schedules_json(units_, m.schedules);
        outputs["payments"] = to_json(m.payments.payments);
        outputs["payment_total"] = m.payments.total;
        outputs["agg_profit"] = m.agg_profit;
        outputs["welfare"] = welfare_json(m.welfare);
        fmt::print(console_, "MPMP dispatch: aggregate profit {:.6f}, system cost {:.6f} (social {:.6f})\n",
                   m.agg_profit, m.welfare.cost_at_actions, m.welfare.cost_social);
    }

    void compare() {
        const auto rows = stage("welfare", [&] { return compare_outcomes(scenario_, solver()); });
        Json table = Json::array();
        fmt::print(console_, "{:<18}{:>14}{:>14}{:>14}\n", "", "profit", "system cost", "load payment");
        for (const auto& r : rows) {
            table.push_back({{"label", r.label}, {"profit", r.profit}, {"system_cost", r.system_cost},
                             {"load_payment", r.load_payment}});
            fmt::print(console_, "{:<18}{:>14.6f}{:>14.6f}{:>14.6f}\n", r.label, r.profit, r.system_cost,
                       r.load_payment);
        }
        outputs["rows"] = table;
    }

    void sweep() {
        std::vector<CurvePoint> points;
        if (scalar()) {
            const StorageUnit& u = units_.front();
            points = stage("welfare", [&] {
                return sweep_cost_profit_curves(scenario_.network, scenario_.demand, units_, 0, 0.0,
                                                std::min(u.d_minus_max, u.d_plus_max / round_trip_efficiency(u)),
                                                settings_.curve_points, solver());
            });
            outputs["curve_family"] = "two-period charge x of the single unit";
        } else {
            points = stage("welfare", [&] {
                const auto social = social_optimum(scenario_.network, scenario_.demand, units_, solver());
                return sweep_cost_profit_curves(scenario_.network, scenario_.demand, units_, social.schedules,
                                                settings_.curve_points, solver());
            });
            outputs["curve_family"] = "social optimum scaled by x";
        }
        write_csv("curves.csv", [&](std::ostream& out) { write_curve_csv(out, points); });
        Json labelled = Json::object();
        for (const auto& p : points) {
            if (!p.label.empty()) labelled[p.label] = {{"x", p.x}, {"system_cost", p.system_cost},
                                                       {"aggregate_profit", p.aggregate_profit}};
        }
        outputs["curve_points"] = labelled;
        if (scalar()) region(scalar_game());
        frontier(bargain_outcome());
        fmt::print(console_, "wrote {} files to {}\n", record.files.size(), settings_.out_dir.string());
    }

private:
    const Scenario& scenario_;
    const PipelineSettings& settings_;
    std::ostream& console_;
    std::vector<StorageUnit> units_;
    double discount_;
    std::optional<BargainingProblem> problem_;
    std::optional<BargainingOutcome> bargain_;

    Index horizon() const { return scenario_.network.horizon(); }
    const solver::SolverSettings& solver() const { return settings_.search.solver; }
    bool scalar() const { return horizon() == 2 && units_.size() == 1; }

    NodalInjections injections(const std::vector<StorageSchedule>& schedules) const {
        return nodal_injections(scenario_.network.n_buses, units_, schedules);
    }

    double storage_costs(const std::vector<StorageSchedule>& schedules) const {
        double c = 0.0;
        for (std::size_t i = 0; i < units_.size(); ++i) c += storage_cost(units_[i], schedules[i]);
        return c;
    }

    const BargainingProblem& problem() {
        if (!problem_) {
            problem_ = stage("bargaining", [&] {
                return make_bargaining_problem(scenario_.network, scenario_.demand, units_, scenario_.aggregator,
                                               discount_, settings_.search);
            });
        }
        return *problem_;
    }

    const AggregateOptimum& optimum() { return problem().optimum; }

    const BargainingOutcome& bargain_outcome() {
        if (!bargain_) bargain_ = stage("bargaining", [&] { return nash_bargain(problem()); });
        return *bargain_;
    }

    ScalarCooperation scalar_game() {
        return stage("cooperation", [&] {
            return ScalarCooperation(scenario_.network, scenario_.demand, units_.front(), scenario_.aggregator,
                                     discount_, settings_.search);
        });
    }

    void region(const ScalarCooperation& game) {
        // Charges up to the unit limit against price gaps down to twice the
        // uncongested spread, which covers the cooperative set in practice.
        const StorageUnit& u = units_.front();
        const MarketOutcome base = clear_market(scenario_.network, scenario_.demand,
                                                NodalInjections::Zero(scenario_.network.n_buses, 2), 0.0, solver());
        const double spread = std::abs(base.lmps(u.bus, 1) - base.lmps(u.bus, 0));
        RegionGrid grid;
        grid.x_max = std::min(u.d_minus_max, u.d_plus_max / round_trip_efficiency(u));
        grid.x_points = settings_.region_points;
        grid.dtau_min = std::max(game.dtau_min(), -std::max(1.0, spread));
        grid.dtau_max = 0.0;
        grid.dtau_points = settings_.region_points;
        const auto cells = stage("cooperation", [&] { return cooperation_region(game, grid, settings_.search.threads); });
        write_csv("region.csv", [&](std::ostream& out) { write_region_csv(out, cells); });
    }

    void frontier(const BargainingOutcome& b) {
        const auto points = stage("bargaining", [&] {
            return bargaining_frontier(problem(), b, 0, settings_.frontier_points);
        });
        write_csv("frontier.csv", [&](std::ostream& out) { write_frontier_csv(out, points); });
    }
};

Json settings_json(const PipelineSettings& s, double discount) {
    return {{"grid_resolution", s.search.grid_resolution}, {"multistart", s.search.multistart},
            {"max_evaluations", s.search.max_evaluations}, {"profit_tolerance", s.search.profit_tolerance},
            {"seed", s.search.seed}, {"kkt_tolerance", s.search.solver.kkt_tolerance},
            {"discount", discount}, {"zero_storage", s.zero_storage}};
}

}  // namespace

StageError::StageError(std::string stage, std::exception_ptr cause, const std::string& what)
    : Error(stage + ": " + what), stage_(std::move(stage)), cause_(std::move(cause)) {}

std::string RunRecord::to_json(bool with_wall_time) const {
    Json j{{"scenario_hash", scenario_hash}, {"command", command}, {"settings", Json::parse(settings_json)},
           {"outputs", Json::parse(outputs_json)}};
    if (with_wall_time) j["wall_time"] = wall_time;
    return j.dump(2) + "\n";
}

const std::vector<std::string>& pipeline_commands() {
    static const std::vector<std::string> commands{"clear",  "stackelberg", "cooperate", "bargain",
                                                   "social", "mpmp",        "compare",   "sweep"};
    return commands;
}

std::vector<ComparisonRow> compare_outcomes(const Scenario& scenario, const solver::SolverSettings& settings) {
    const auto units = scenario.managed_units();
    auto row = [&](const std::string& label, const std::vector<StorageSchedule>& schedules) {
        const WelfareReport w = welfare_report(scenario.network, scenario.demand, units, schedules, settings);
        return ComparisonRow{label, w.agg_su_profit, w.cost_at_actions, w.load_payment};
    };
    return {row("social optimum", social_optimum(scenario.network, scenario.demand, units, settings).schedules),
            row("market clearing", max_aggregate_profit(scenario.network, scenario.demand, units, settings).schedules)};
}

RunRecord run_pipeline(const Scenario& scenario, const std::string& command, const PipelineSettings& settings,
                       std::ostream& console) {
    const auto& commands = pipeline_commands();
    if (std::find(commands.begin(), commands.end(), command) == commands.end()) {
        throw ValidationError("command", "unknown command '" + command + "'");
    }
    stage("cli_io", [&] {
        scenario.validate();
        settings.search.validate();
        if (settings.discount && !(*settings.discount > 0.0 && *settings.discount < 1.0)) {
            throw ValidationError("delta", "must lie in (0, 1)");
        }
        std::filesystem::create_directories(settings.out_dir);
        return 0;
    });

    const auto start = std::chrono::steady_clock::now();
    Run run(scenario, settings, console);
    if (command == "clear") run.clear();
    else if (command == "stackelberg") run.stackelberg();
    else if (command == "cooperate") run.cooperate();
    else if (command == "bargain") run.bargain();
    else if (command == "social") run.social();
    else if (command == "mpmp") run.mpmp();
    else if (command == "compare") run.compare();
    else run.sweep();

    RunRecord& r = run.record;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.scenario_hash = scenario_hash(scenario);
    r.command = command;
    r.settings_json = settings_json(settings, settings.discount.value_or(scenario.discount)).dump();
    r.outputs_json = run.outputs.dump();

    const auto path = settings.out_dir / (command + ".json");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StageError("cli_io", nullptr, "cannot write " + path.string());
    out << r.to_json();
    r.files.insert(r.files.begin(), path);
    return r;
}

}  // namespace esagg
