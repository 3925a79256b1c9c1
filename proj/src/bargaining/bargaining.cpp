#include "esagg/bargaining.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>

#include "esagg/parallel.hpp"
#include "esagg/welfare.hpp"

namespace esagg {
namespace {

double golden_max(const std::function<double(double)>& f, double lo, double hi, double& arg) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int k = 0; k < 200 && b - a > 1e-12 * std::max(1.0, std::abs(a) + std::abs(b)); ++k) {
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
    arg = fc >= fd ? c : d;
    return std::max(fc, fd);
}

double bisect_boundary(const std::function<double(double)>& f, double inside, double outside, double tolerance) {
    while (std::abs(outside - inside) > tolerance) {
        const double mid = 0.5 * (inside + outside);
        (f(mid) >= 0.0 ? inside : outside) = mid;
    }
    return inside;
}

// Smallest one-shot best-response profit of a unit over the prices in
// [0, M]^T that pay exactly `payment` for the schedule with net injections
// `net`, with the first entries of tau optionally pinned. The best-response
// profit is convex in tau with gradient equal to the responding net
// injection, so the program is solved by projected gradient.
struct SliceMinimum {
    double value = 0.0;
    Vector tau;
};

std::optional<SliceMinimum> min_response_profit(const StorageUnit& unit, const Vector& net, double payment,
                                                double bound, const std::vector<double>& pinned,
                                                const solver::SolverSettings& settings) {
    const Index horizon = net.size();
    const Index pins = static_cast<Index>(pinned.size());
    auto respond = [&](const Vector& tau) { return su_best_response(unit, {tau, bound}, settings); };

    solver::ConvexProgram program;
    program.dimension = horizon;
    program.objective = solver::SmoothObjective{
        [&](const Vector& tau) { return su_profit(unit, respond(tau), {tau, bound}); },
        [&](const Vector& tau) -> Vector { return respond(tau).net(); }};
    program.eq_matrix = Matrix::Zero(1 + pins, horizon);
    program.eq_rhs = Vector::Zero(1 + pins);
    program.eq_matrix.row(0) = net.transpose();
    program.eq_rhs(0) = payment;
    for (Index k = 0; k < pins; ++k) {
        program.eq_matrix(1 + k, k) = 1.0;
        program.eq_rhs(1 + k) = pinned[static_cast<std::size_t>(k)];
    }
    program.ineq_matrix = Matrix::Zero(2 * horizon, horizon);
    program.ineq_rhs = Vector::Zero(2 * horizon);
    program.ineq_matrix.topRows(horizon) = Matrix::Identity(horizon, horizon);
    program.ineq_rhs.head(horizon).setConstant(bound);
    program.ineq_matrix.bottomRows(horizon) = -Matrix::Identity(horizon, horizon);
    try {
        const solver::Solution s = solver::solve(program, settings);
        return SliceMinimum{s.objective_value, s.point};
    } catch (const solver::Infeasible&) {
        return std::nullopt;
    } catch (const solver::MaxIterations& e) {
        // The last projected iterate is feasible; accept it when close.
        if (e.best().kkt_residual <= 1e-6) return SliceMinimum{e.best().objective_value, e.best().point};
        throw;
    }
}

// Smallest (or, with sign = -1, largest) attainable tau_j on the slice with
// the earlier entries pinned.
std::optional<double> slice_coordinate_bound(const Vector& net, double payment, double bound,
                                             const std::vector<double>& pinned, Index j, double sign) {
    const Index horizon = net.size();
    const Index pins = static_cast<Index>(pinned.size());
    Vector linear = Vector::Zero(horizon);
    linear(j) = sign;
    auto program = solver::ConvexProgram::quadratic(Matrix::Zero(horizon, horizon), linear);
    program.eq_matrix = Matrix::Zero(1 + pins, horizon);
    program.eq_rhs = Vector::Zero(1 + pins);
    program.eq_matrix.row(0) = net.transpose();
    program.eq_rhs(0) = payment;
    for (Index k = 0; k < pins; ++k) {
        program.eq_matrix(1 + k, k) = 1.0;
        program.eq_rhs(1 + k) = pinned[static_cast<std::size_t>(k)];
    }
    program.ineq_matrix = Matrix::Zero(2 * horizon, horizon);
    program.ineq_rhs = Vector::Zero(2 * horizon);
    program.ineq_matrix.topRows(horizon) = Matrix::Identity(horizon, horizon);
    program.ineq_rhs.head(horizon).setConstant(bound);
    program.ineq_matrix.bottomRows(horizon) = -Matrix::Identity(horizon, horizon);
    try {
        return solver::solve(program).point(j);
    } catch (const solver::Infeasible&) {
        return std::nullopt;
    }
}

double max_abs_change(const std::vector<PriceSchedule>& a, const std::vector<PriceSchedule>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (a[i].tau - b[i].tau).cwiseAbs().maxCoeff());
    return worst;
}

}  // namespace

double aggregate_profit(const Network& network, const DemandProfile& demand, const std::vector<StorageUnit>& units,
                        const std::vector<StorageSchedule>& schedules, const solver::SolverSettings& settings) {
    const NodalInjections d = nodal_injections(network.n_buses, units, schedules);
    const Matrix lmps = clear_market(network, demand, d, 0.0, settings).lmps;
    double total = (lmps.array() * d.array()).sum();
    for (std::size_t i = 0; i < units.size(); ++i) total -= storage_cost(units[i], schedules[i]);
    return total;
}

AggregateOptimum max_aggregate_profit(const Network& network, const DemandProfile& demand,
                                      const std::vector<StorageUnit>& units, const solver::SolverSettings& settings) {
    if (units.empty()) throw ValidationError("units", "at least one unit required");
    const Index horizon = network.horizon();
    const std::size_t k = units.size();
    std::vector<Matrix> maps;
    for (Index t = 0; t < horizon; ++t) maps.push_back(injection_map(network.n_buses, units, horizon, t));
    const StorageConstraints feasible = stacked_constraints(units, horizon);
    const Matrix cost_hessian = stacked_cost_hessian(units, horizon);

    auto profit = [&](const Vector& x) { return aggregate_profit(network, demand, units, split_schedules(x, k, horizon), settings); };

    auto climb = [&](Vector x, int& iterations) {
        double value = profit(x);
        for (iterations = 0; iterations < 200; ++iterations) {
            const auto schedules = split_schedules(x, k, horizon);
            const NodalInjections d = nodal_injections(network.n_buses, units, schedules);
            const MarketOutcome market = clear_market(network, demand, d, 0.0, settings);
            const std::vector<Matrix> jac = price_demand_jacobian(network, demand, d, market);

            // Local model: lambda_t(y) = lambda_t - J_t (d_t(y) - d_t(x)).
            Matrix hessian = cost_hessian;
            Vector linear = Vector::Zero(x.size());
            for (Index t = 0; t < horizon; ++t) {
                const Matrix& p = maps[static_cast<std::size_t>(t)];
                const Matrix& j = jac[static_cast<std::size_t>(t)];
                hessian += 2.0 * p.transpose() * j * p;
                linear -= p.transpose() * (market.lmps.col(t) + j * d.col(t));
            }
            auto model = solver::ConvexProgram::quadratic(0.5 * (hessian + hessian.transpose()), linear);
            model.eq_matrix = feasible.eq_matrix;
            model.eq_rhs = feasible.eq_rhs;
            model.ineq_matrix = feasible.ineq_matrix;
            model.ineq_rhs = feasible.ineq_rhs;
            const Vector target = solver::solve(model, x, settings).point;

            const Vector step = target - x;
            if (step.cwiseAbs().maxCoeff() <= 1e-12) break;
            double alpha = 1.0;
            bool improved = false;
            for (int h = 0; h < 40; ++h, alpha *= 0.5) {
                const Vector trial = x + alpha * step;
                const double v = profit(trial);
                if (v > value) {
                    improved = v - value > 1e-15 * std::max(1.0, std::abs(value));
                    x = trial;
                    value = v;
                    break;
                }
            }
            if (!improved) break;
        }
        return std::pair<Vector, double>{x, value};
    };

    std::vector<Vector> starts{Vector::Zero(2 * horizon * static_cast<Index>(k))};
    starts.push_back(stack_schedules(social_optimum(network, demand, units, settings).schedules));

    AggregateOptimum best;
    double best_value = -std::numeric_limits<double>::infinity();
    for (const Vector& s : starts) {
        int iterations = 0;
        auto [x, value] = climb(s, iterations);
        if (best.schedules.empty() || value > best_value + 1e-12 * std::max(1.0, std::abs(best_value))) {
            best_value = value;
            best.schedules = split_schedules(x, k, horizon);
            best.iterations = iterations;
        }
    }
    best.profit = best_value;
    const NodalInjections d = nodal_injections(network.n_buses, units, best.schedules);
    best.revenue = (clear_market(network, demand, d, 0.0, settings).lmps.array() * d.array()).sum();
    return best;
}

BargainingProblem make_bargaining_problem(const Network& network, const DemandProfile& demand,
                                          const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                                          double discount, const SearchSettings& search) {
    if (!(discount > 0.0 && discount < 1.0)) throw ValidationError("discount", "must lie in (0, 1)");
    search.validate();
    BargainingProblem p{network, demand, units, config, discount, search, {}, 0.0};
    p.optimum = max_aggregate_profit(network, demand, units, search.solver);
    return p;
}

BargainingSlice nash_bargain(const BargainingProblem& problem, std::size_t i,
                             const std::vector<PriceSchedule>& agreed_prices) {
    const auto& units = problem.units;
    const auto& d_star = problem.optimum.schedules;
    if (i >= units.size() || agreed_prices.size() != units.size()) throw DimensionMismatch("bad unit index or prices");
    const StorageUnit& unit = units[i];
    const double bound = problem.config.price_bound;
    const double delta = problem.discount;
    const auto& settings = problem.search.solver;

    BargainingSlice out;
    const GameOutcome defect = defection_equilibrium(problem.network, problem.demand, units, problem.config,
                                                     agreed_prices, d_star, i, problem.search);
    const double agg_prime = defect.agg_profit + problem.agg_outside_option_shift;
    const double su_prime = defect.su_profits[i];
    out.disagreement = {agg_prime, su_prime, defect.prices[i], defect.schedules[i]};

    const Vector net = d_star[i].net();
    const double own_cost = storage_cost(unit, d_star[i]);
    double others_paid = 0.0;
    for (std::size_t j = 0; j < units.size(); ++j) {
        if (j != i) others_paid += agreed_prices[j].tau.dot(d_star[j].net());
    }
    // Aggregator profit before paying unit i.
    const double pot = problem.optimum.revenue - others_paid;

    const double p_lo = bound * net.cwiseMin(0.0).sum();
    const double p_hi = bound * net.cwiseMax(0.0).sum();
    auto su_margin = [&](double p) {
        const auto m = min_response_profit(unit, net, p, bound, {}, settings);
        if (!m) return -std::numeric_limits<double>::infinity();
        return p - own_cost - delta * su_prime - (1.0 - delta) * m->value + 1e-9;
    };
    const double agg_cap = pot - agg_prime + 1e-9;

    double lower = 0.0, upper = 0.0;
    if (p_hi - p_lo <= 1e-12) {
        if (su_margin(0.0) < 0.0 || agg_cap < 0.0) throw EmptyBargainingSet("no cooperative payment for unit " + unit.id);
    } else {
        double peak = 0.0;
        if (golden_max(su_margin, p_lo, p_hi, peak) < 0.0) {
            throw EmptyBargainingSet("no price sustains cooperation of unit " + unit.id + " at the optimal schedule");
        }
        lower = su_margin(p_lo) >= 0.0 ? p_lo : bisect_boundary(su_margin, peak, p_lo, 1e-11);
        upper = su_margin(p_hi) >= 0.0 ? p_hi : bisect_boundary(su_margin, peak, p_hi, 1e-11);
        upper = std::min(upper, agg_cap);
        if (upper < lower) {
            throw EmptyBargainingSet("cooperation ranges of unit " + unit.id + " and the aggregator do not overlap");
        }
    }
    out.payment_min = lower;
    out.payment_max = upper;

    // Symmetric split of the surplus over the disagreement point.
    const double symmetric = 0.5 * (own_cost + su_prime + pot - agg_prime);
    out.payment = std::clamp(symmetric, lower, upper);
    out.interior = symmetric > lower + 1e-9 && symmetric < upper - 1e-9;
    out.su_profit = out.payment - own_cost;
    out.agg_profit = pot - out.payment;
    out.nash_product = (out.su_profit - su_prime) * (out.agg_profit - agg_prime);

    // Lexicographically smallest tau paying out.payment that keeps the
    // unit's margin nonnegative.
    const Index horizon = net.size();
    const double threshold = (out.payment - own_cost - delta * su_prime) / (1.0 - delta) + 1e-9;
    std::vector<double> pinned;
    auto feasible_at = [&](double v) {
        auto trial = pinned;
        trial.push_back(v);
        const auto m = min_response_profit(unit, net, out.payment, bound, trial, settings);
        return m && m->value <= threshold;
    };
    for (Index j = 0; j < horizon; ++j) {
        const auto lo = slice_coordinate_bound(net, out.payment, bound, pinned, j, 1.0);
        const auto hi = slice_coordinate_bound(net, out.payment, bound, pinned, j, -1.0);
        if (!lo || !hi) throw EmptyBargainingSet("price slice of unit " + unit.id + " is empty");
        double value = *lo;
        if (!feasible_at(*lo)) {
            // Largest-value end: use the slice minimizer as the feasible anchor.
            const auto anchor = min_response_profit(unit, net, out.payment, bound, pinned, settings);
            double inside = anchor ? anchor->tau(j) : *hi;
            if (!feasible_at(inside)) inside = *hi;
            value = bisect_boundary([&](double v) { return feasible_at(v) ? 1.0 : -1.0; }, inside, *lo, 1e-10);
        }
        pinned.push_back(value);
    }
    out.prices = {Eigen::Map<const Vector>(pinned.data(), horizon), bound};
    return out;
}

BargainingOutcome nash_bargain(const BargainingProblem& problem) {
    const auto& units = problem.units;
    const Index horizon = problem.network.horizon();
    std::vector<PriceSchedule> prices(units.size(), PriceSchedule{Vector::Zero(horizon), problem.config.price_bound});
    BargainingOutcome out;
    out.agreed_schedules = problem.optimum.schedules;
    std::vector<BargainingSlice> slices(units.size());
    for (out.sweeps = 1; out.sweeps <= 100; ++out.sweeps) {
        parallel_for(
            units.size(), [&](std::size_t i) { slices[i] = nash_bargain(problem, i, prices); },
            problem.search.threads);
        std::vector<PriceSchedule> next;
        for (const auto& s : slices) next.push_back(s.prices);
        const double change = max_abs_change(next, prices);
        prices = std::move(next);
        if (change < 1e-8) {
            out.converged = true;
            break;
        }
    }
    out.sweeps = std::min(out.sweeps, 100);
    out.agreed_prices = prices;
    out.slices = slices;
    out.agg_profit = problem.optimum.revenue;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const double paid = prices[i].tau.dot(out.agreed_schedules[i].net());
        out.agg_profit -= paid;
        out.su_profits.push_back(paid - storage_cost(units[i], out.agreed_schedules[i]));
    }
    return out;
}

std::vector<FrontierPoint> bargaining_frontier(const BargainingProblem& problem, const BargainingOutcome& outcome,
                                               std::size_t i, int n_points) {
    if (i >= outcome.slices.size()) throw DimensionMismatch("unit index out of range");
    if (n_points < 2) throw ValidationError("n_points", "must be at least 2");
    const BargainingSlice& s = outcome.slices[i];
    const double own_cost = storage_cost(problem.units[i], outcome.agreed_schedules[i]);
    const double pot = s.agg_profit + s.payment;
    std::vector<FrontierPoint> points;
    for (int k = 0; k < n_points; ++k) {
        const double p = s.payment_min + (s.payment_max - s.payment_min) * k / (n_points - 1);
        points.push_back({p - own_cost, pot - p, true, false});
    }
    const double gain = std::max(s.su_profit - s.disagreement.su_profit, 0.0);
    const double reach = gain > 0.0 ? 2.0 * gain : 1.0;
    for (int k = 0; k < n_points; ++k) {
        const double g = reach * k / (n_points - 1);
        points.push_back({s.disagreement.su_profit + g, s.disagreement.agg_profit + g, false, true});
    }
    points.push_back({s.su_profit, s.agg_profit, true, true});
    return points;
}

void write_frontier_csv(std::ostream& out, const std::vector<FrontierPoint>& points) {
    out << "pi_s,pi_a,on_pareto_line,on_symmetry_line\n";
    for (const auto& p : points) {
        fmt::print(out, "{:.12g},{:.12g},{},{}\n", p.pi_s, p.pi_a, p.on_pareto_line, p.on_symmetry_line);
    }
}

}  // namespace esagg
