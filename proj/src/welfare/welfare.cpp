#include "esagg/welfare.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

namespace esagg {
namespace {

double golden(const std::function<double(double)>& f, double lo, double hi) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int k = 0; k < 200 && b - a > 1e-13 * std::max(1.0, std::abs(a) + std::abs(b)); ++k) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    // Endpoints matter when the optimum sits on a bound.
    double best = fc >= fd ? c : d;
    for (double e : {lo, hi}) {
        if (f(e) > f(best)) best = e;
    }
    return best;
}

std::vector<StorageSchedule> zero_schedules(const std::vector<StorageUnit>& units, Index horizon) {
    return std::vector<StorageSchedule>(units.size(), StorageSchedule::zero(horizon));
}

NodalInjections injections_or_zero(const Network& network, const std::vector<StorageUnit>& units,
                                   const std::vector<StorageSchedule>& schedules) {
    if (units.empty()) return NodalInjections::Zero(network.n_buses, network.horizon());
    return nodal_injections(network.n_buses, units, schedules);
}

double total_storage_cost(const std::vector<StorageUnit>& units, const std::vector<StorageSchedule>& schedules) {
    double c = 0.0;
    for (std::size_t i = 0; i < units.size(); ++i) c += storage_cost(units[i], schedules[i]);
    return c;
}

}  // namespace

SocialOptimum social_optimum(const Network& network, const DemandProfile& demand,
                             const std::vector<StorageUnit>& units, const solver::SolverSettings& settings) {
    const Index n = network.n_buses;
    const Index horizon = network.horizon();
    const Index lines = network.n_lines();
    const Index ng = n * horizon;
    const Index ns = 2 * horizon * static_cast<Index>(units.size());
    const Index dim = ng + ns;

    // Variables: g_bt at t * n + b, then the stacked storage variables.
    Matrix hessian = Matrix::Zero(dim, dim);
    Vector linear = Vector::Zero(dim);
    for (Index t = 0; t < horizon; ++t) {
        for (Index b = 0; b < n; ++b) {
            hessian(t * n + b, t * n + b) = network.gen_slope(b, t);
            linear(t * n + b) = network.gen_intercept(b, t);
        }
    }
    if (ns > 0) hessian.bottomRightCorner(ns, ns) = stacked_cost_hessian(units, horizon);

    const StorageConstraints storage = stacked_constraints(units, horizon);
    auto program = solver::ConvexProgram::quadratic(hessian, linear);
    program.eq_matrix = Matrix::Zero(horizon + storage.eq_matrix.rows(), dim);
    program.eq_rhs = Vector::Zero(program.eq_matrix.rows());
    program.ineq_matrix = Matrix::Zero(horizon * lines + ng + storage.ineq_matrix.rows(), dim);
    program.ineq_rhs = Vector::Zero(program.ineq_matrix.rows());
    for (Index t = 0; t < horizon; ++t) {
        const Matrix p = injection_map(n, units, horizon, t);
        program.eq_matrix.block(t, t * n, 1, n).setOnes();
        if (ns > 0) program.eq_matrix.block(t, ng, 1, ns) = p.colwise().sum();
        program.eq_rhs(t) = demand.col(t).sum();
        if (lines > 0) {
            program.ineq_matrix.block(t * lines, t * n, lines, n) = network.shift_factors;
            if (ns > 0) program.ineq_matrix.block(t * lines, ng, lines, ns) = network.shift_factors * p;
            program.ineq_rhs.segment(t * lines, lines) = network.line_limits + network.shift_factors * demand.col(t);
        }
    }
    program.ineq_matrix.block(horizon * lines, 0, ng, ng) = -Matrix::Identity(ng, ng);
    if (ns > 0) {
        program.eq_matrix.bottomRightCorner(storage.eq_matrix.rows(), ns) = storage.eq_matrix;
        program.eq_rhs.tail(storage.eq_rhs.size()) = storage.eq_rhs;
        program.ineq_matrix.bottomRightCorner(storage.ineq_matrix.rows(), ns) = storage.ineq_matrix;
        program.ineq_rhs.tail(storage.ineq_rhs.size()) = storage.ineq_rhs;
    }

    solver::Solution s;
    try {
        s = solver::solve(program, settings);
    } catch (const solver::Infeasible&) {
        throw InfeasibleDispatch("no storage dispatch admits a feasible market clearing");
    }
    SocialOptimum out;
    out.generation = Eigen::Map<const Matrix>(s.point.data(), n, horizon);
    out.schedules = ns > 0 ? split_schedules(s.point.tail(ns), units.size(), horizon) : std::vector<StorageSchedule>{};
    out.system_cost = s.objective_value;
    return out;
}

WelfareReport welfare_report(const Network& network, const DemandProfile& demand,
                             const std::vector<StorageUnit>& units, const std::vector<StorageSchedule>& schedules,
                             const solver::SolverSettings& settings) {
    WelfareReport r;
    const Index horizon = network.horizon();
    r.cost_no_storage = clear_market(network, demand, NodalInjections::Zero(network.n_buses, horizon), 0.0, settings)
                            .system_cost;
    const NodalInjections d = injections_or_zero(network, units, schedules);
    const MarketOutcome at = clear_market(network, demand, d, total_storage_cost(units, schedules), settings);
    r.cost_at_actions = at.system_cost;
    r.cost_social = social_optimum(network, demand, units, settings).system_cost;
    r.agg_su_profit = (at.lmps.array() * d.array()).sum() - at.storage_cost;
    r.load_payment = (at.lmps.array() * demand.array()).sum();
    return r;
}

NoHarmReport verify_no_harm(const Network& network, const DemandProfile& demand,
                               const std::vector<StorageUnit>& units, const std::vector<StorageSchedule>& schedules,
                               const solver::SolverSettings& settings) {
    NoHarmReport r;
    const Index horizon = network.horizon();
    const MarketOutcome none =
        clear_market(network, demand, NodalInjections::Zero(network.n_buses, horizon), 0.0, settings);
    const NodalInjections d = injections_or_zero(network, units, schedules);
    const MarketOutcome at = clear_market(network, demand, d, total_storage_cost(units, schedules), settings);
    r.cost_no_storage = none.system_cost;
    r.cost_at_actions = at.system_cost;
    r.net_revenue = (at.lmps.array() * d.array()).sum();
    r.coalition_profit = r.net_revenue - at.storage_cost;
    r.precondition_met = r.coalition_profit >= 0.0;
    r.cost_not_increased = r.cost_at_actions <= r.cost_no_storage + 1e-8;
    r.revenue_slack = none.generation_cost - at.generation_cost - r.net_revenue;
    r.slack_nonnegative = r.revenue_slack >= -1e-8;
    return r;
}

void MpmpConfig::validate(const Network& network, const std::string& path) const {
    if (constants.rows() != network.n_buses || constants.cols() != network.horizon()) {
        throw ValidationError(path + ".constants", "must be bus x period");
    }
    if (!constants.allFinite()) throw ValidationError(path + ".constants", "entries must be finite");
}

MpmpPayments mpmp_payment(const Network& network, const MarketOutcome& outcome, const NodalInjections& injections,
                          const MpmpConfig& config) {
    config.validate(network);
    const Index n = network.n_buses, horizon = network.horizon();
    MpmpPayments p;
    p.payments.resize(n, horizon);
    p.prices.resize(n, horizon);
    p.price_defined.assign(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(horizon), false));
    for (Index b = 0; b < n; ++b) {
        for (Index t = 0; t < horizon; ++t) {
            const double pay = config.constants(b, t) - network.generation_cost(b, t, outcome.generation(b, t));
            p.payments(b, t) = pay;
            const bool defined = std::abs(injections(b, t)) > 1e-9;
            p.price_defined[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)] = defined;
            p.prices(b, t) = defined ? pay / injections(b, t) : std::numeric_limits<double>::quiet_NaN();
        }
    }
    p.total = p.payments.sum();
    return p;
}

MpmpOutcome clear_with_mpmp(const Network& network, const DemandProfile& demand,
                            const std::vector<StorageUnit>& units, const MpmpConfig& config,
                            const solver::SolverSettings& settings) {
    config.validate(network);
    if (units.empty()) throw ValidationError("units", "at least one unit required");
    const Index horizon = network.horizon();
    const std::size_t k = units.size();
    std::vector<Matrix> maps;
    for (Index t = 0; t < horizon; ++t) maps.push_back(injection_map(network.n_buses, units, horizon, t));
    const Matrix cost_hessian = stacked_cost_hessian(units, horizon);
    const StorageConstraints feasible = stacked_constraints(units, horizon);

    // The aggregate maximizes sum(C) - G(q, d) - c(d); minimize G + c. The
    // gradient of G in d_t is -lambda_t.
    auto market_at = [&](const Vector& x) {
        return clear_market(network, demand, nodal_injections(network.n_buses, units, split_schedules(x, k, horizon)),
                            0.0, settings);
    };
    solver::ConvexProgram program;
    program.dimension = 2 * horizon * static_cast<Index>(k);
    program.objective = solver::SmoothObjective{
        [&](const Vector& x) { return market_at(x).generation_cost + 0.5 * x.dot(cost_hessian * x); },
        [&](const Vector& x) -> Vector {
            const MarketOutcome m = market_at(x);
            Vector g = cost_hessian * x;
            for (Index t = 0; t < horizon; ++t) g -= maps[static_cast<std::size_t>(t)].transpose() * m.lmps.col(t);
            return g;
        }};
    program.eq_matrix = feasible.eq_matrix;
    program.eq_rhs = feasible.eq_rhs;
    program.ineq_matrix = feasible.ineq_matrix;
    program.ineq_rhs = feasible.ineq_rhs;
    const solver::Solution s = solver::solve(program, Vector::Zero(program.dimension), settings);

    MpmpOutcome out;
    out.schedules = split_schedules(s.point, k, horizon);
    out.iterations = s.iterations;
    const NodalInjections d = nodal_injections(network.n_buses, units, out.schedules);
    const MarketOutcome market = clear_market(network, demand, d, total_storage_cost(units, out.schedules), settings);
    out.lmps = market.lmps;
    out.payments = mpmp_payment(network, market, d, config);
    out.agg_profit = out.payments.total - market.storage_cost;
    out.welfare = welfare_report(network, demand, units, out.schedules, settings);
    return out;
}

MpmpConfig mpmp_constants_for_profit(const Network& network, const DemandProfile& demand,
                                     const std::vector<StorageUnit>& units, double target,
                                     const solver::SolverSettings& settings) {
    // With C = 0 the best attainable profit is -S at the social optimum, and
    // profit moves one for one with sum(C).
    const double base = -social_optimum(network, demand, units, settings).system_cost;
    const double cells = static_cast<double>(network.n_buses * network.horizon());
    return {Matrix::Constant(network.n_buses, network.horizon(), (target - base) / cells)};
}

RegulatedSplit regulated_split(double regulated_profit, double agg_defection_profit, double su_defection_profit) {
    const double gap = agg_defection_profit - su_defection_profit;
    RegulatedSplit r;
    r.su_profit = 0.5 * (regulated_profit - gap);
    r.agg_profit = 0.5 * (regulated_profit + gap);
    r.interior = regulated_profit > agg_defection_profit + su_defection_profit;
    return r;
}

namespace {

std::vector<CurvePoint> labelled_curve(const std::function<std::vector<StorageSchedule>(double)>& schedules_at,
                                       const Network& network, const DemandProfile& demand,
                                       const std::vector<StorageUnit>& units, double x_min, double x_max,
                                       int points, const solver::SolverSettings& settings) {
    auto evaluate = [&](double x, std::string label) {
        const auto s = schedules_at(x);
        return CurvePoint{x, system_cost(network, demand, units, s, settings),
                          aggregate_profit(network, demand, units, s, settings), std::move(label)};
    };
    const double b = golden([&](double x) { return aggregate_profit(network, demand, units, schedules_at(x), settings); },
                            x_min, x_max);
    const double c = golden([&](double x) { return -system_cost(network, demand, units, schedules_at(x), settings); },
                            x_min, x_max);

    std::vector<CurvePoint> out;
    for (int k = 0; k < points; ++k) out.push_back(evaluate(x_min + (x_max - x_min) * k / (points - 1), ""));
    auto place = [&](double x, const char* label) {
        for (auto& p : out) {
            if (std::abs(p.x - x) <= 1e-12) {
                if (p.label.empty()) p.label = label;
                return;
            }
        }
        out.push_back(evaluate(x, label));
    };
    if (x_min <= 0.0 && 0.0 <= x_max) place(0.0, "A");
    place(b, "B");
    place(c, "C");
    std::stable_sort(out.begin(), out.end(), [](const CurvePoint& l, const CurvePoint& r) { return l.x < r.x; });
    return out;
}

}  // namespace

std::vector<CurvePoint> sweep_cost_profit_curves(const Network& network, const DemandProfile& demand,
                                                 const std::vector<StorageUnit>& units, std::size_t i,
                                                 double x_min, double x_max, int points,
                                                 const solver::SolverSettings& settings) {
    if (i >= units.size()) throw DimensionMismatch("unit index out of range");
    if (network.horizon() != 2) throw ValidationError("network.gen_cost", "the curve family needs two periods");
    if (points < 2 || !(x_max > x_min)) throw ValidationError("x_range", "needs x_max > x_min and at least 2 points");
    auto schedules_at = [&](double x) {
        auto s = zero_schedules(units, 2);
        s[i] = two_period_schedule(units[i], x);
        return s;
    };
    return labelled_curve(schedules_at, network, demand, units, x_min, x_max, points, settings);
}

std::vector<CurvePoint> sweep_cost_profit_curves(const Network& network, const DemandProfile& demand,
                                                 const std::vector<StorageUnit>& units,
                                                 const std::vector<StorageSchedule>& direction, int points,
                                                 const solver::SolverSettings& settings) {
    if (direction.size() != units.size()) throw DimensionMismatch("one direction schedule per unit required");
    if (points < 2) throw ValidationError("points", "needs at least 2 points");
    auto schedules_at = [&](double s) {
        auto out = direction;
        for (auto& d : out) {
            d.d_plus *= s;
            d.d_minus *= s;
        }
        return out;
    };
    return labelled_curve(schedules_at, network, demand, units, 0.0, 1.0, points, settings);
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
    out << "x,system_cost,aggregate_profit,label\n";
    for (const auto& p : points) {
        fmt::print(out, "{:.12g},{:.12g},{:.12g},{}\n", p.x, p.system_cost, p.aggregate_profit, p.label);
    }
}

}  // namespace esagg
