#include "esagg/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace esagg {
namespace {

struct PeriodResult {
    Vector g;
    Vector lmp;
    double zeta = 0.0;
    Vector mu;
    double cost = 0.0;
    double kkt = 0.0;
};

// Net load seen by the generators: q - d.
Vector net_load(const DemandProfile& demand, const NodalInjections& injections, Index t) {
    return demand.col(t) - injections.col(t);
}

PeriodResult clear_period(const Network& net, const Vector& load, Index t, const solver::SolverSettings& settings) {
    const Index n = net.n_buses;
    const Index lines = net.n_lines();
    auto program = solver::ConvexProgram::quadratic(net.gen_slope.col(t).asDiagonal().toDenseMatrix(),
                                                    net.gen_intercept.col(t));
    program.eq_matrix = Matrix::Ones(1, n);
    program.eq_rhs = Vector::Constant(1, load.sum());
    program.ineq_matrix.resize(lines + n, n);
    program.ineq_rhs.resize(lines + n);
    if (lines > 0) {
        program.ineq_matrix.topRows(lines) = net.shift_factors;
        program.ineq_rhs.head(lines) = net.line_limits + net.shift_factors * load;
    }
    program.ineq_matrix.bottomRows(n) = -Matrix::Identity(n, n);
    program.ineq_rhs.tail(n).setZero();
    // Generator-bound multipliers are made minimal first so that a bus with
    // no dispatch still reports its marginal cost at zero output.
    program.dual_tier.assign(static_cast<std::size_t>(lines + n), 0);
    std::fill(program.dual_tier.begin() + lines, program.dual_tier.end(), 1);

    solver::Solution s;
    try {
        s = solver::solve(program, settings);
    } catch (const solver::Infeasible&) {
        throw InfeasibleDispatch("no nonnegative dispatch balances period " + std::to_string(t) +
                                 " within the line limits");
    }
    PeriodResult r;
    r.g = s.point;
    r.zeta = s.eq_duals(0);
    r.mu = s.ineq_duals.head(lines);
    r.lmp = Vector::Constant(n, -r.zeta);
    if (lines > 0) r.lmp -= net.shift_factors.transpose() * r.mu;
    r.cost = s.objective_value;
    r.kkt = s.kkt_residual;
    return r;
}

struct ActiveSet {
    std::vector<char> lines;
    std::vector<char> bounds;
    bool operator==(const ActiveSet&) const = default;
};

ActiveSet active_set(const Network& net, const Vector& load, const PeriodResult& r) {
    const double scale = std::max(1.0, load.cwiseAbs().maxCoeff());
    ActiveSet a;
    for (Index l = 0; l < net.n_lines(); ++l) {
        const double slack = net.line_limits(l) + net.shift_factors.row(l).dot(load) - net.shift_factors.row(l).dot(r.g);
        a.lines.push_back(slack <= 1e-9 * scale ? 1 : 0);
    }
    for (Index b = 0; b < net.n_buses; ++b) a.bounds.push_back(r.g(b) <= 1e-9 * scale ? 1 : 0);
    return a;
}

double generation_cost_at(const Network& net, const DemandProfile& demand, const NodalInjections& injections,
                          const solver::SolverSettings& settings) {
    double total = 0.0;
    for (Index t = 0; t < net.horizon(); ++t) total += clear_period(net, net_load(demand, injections, t), t, settings).cost;
    return total;
}

void check_shapes(const Network& net, const DemandProfile& demand, const NodalInjections& injections) {
    if (demand.rows() != net.n_buses || demand.cols() != net.horizon()) {
        throw DimensionMismatch("demand must be bus x period");
    }
    if (injections.rows() != net.n_buses || injections.cols() != net.horizon()) {
        throw DimensionMismatch("injections must be bus x period");
    }
}

}  // namespace

void Network::validate(const std::string& path) const {
    if (n_buses < 1) throw ValidationError(path + ".n_buses", "must be at least 1");
    if (gen_intercept.rows() != n_buses || gen_slope.rows() != n_buses || gen_slope.cols() != gen_intercept.cols()) {
        throw ValidationError(path + ".gen_cost", "intercept and slope must both be bus x period");
    }
    if (gen_intercept.cols() < 1) throw ValidationError(path + ".gen_cost", "horizon must be at least 1");
    if (!gen_intercept.allFinite() || !gen_slope.allFinite()) {
        throw ValidationError(path + ".gen_cost", "entries must be finite");
    }
    if ((gen_slope.array() < 0.0).any()) throw ValidationError(path + ".gen_cost.slope", "must be nonnegative");
    if (shift_factors.rows() != line_limits.size()) {
        throw ValidationError(path + ".line_limits", "length must equal the shift factor row count");
    }
    if (shift_factors.rows() > 0 && shift_factors.cols() != n_buses) {
        throw ValidationError(path + ".shift_factors", "needs one column per bus");
    }
    if (!shift_factors.allFinite()) throw ValidationError(path + ".shift_factors", "entries must be finite");
    if (!line_limits.allFinite() || (line_limits.array() < 0.0).any()) {
        throw ValidationError(path + ".line_limits", "must be finite and nonnegative");
    }
}

void validate_demand(const Network& network, const DemandProfile& demand, const std::string& path) {
    if (demand.rows() != network.n_buses || demand.cols() != network.horizon()) {
        throw ValidationError(path, "must be bus x period");
    }
    if (!demand.allFinite() || (demand.array() < 0.0).any()) {
        throw ValidationError(path, "must be finite and nonnegative");
    }
}

MarketOutcome clear_market(const Network& network, const DemandProfile& demand, const NodalInjections& injections,
                           double storage_costs, const solver::SolverSettings& settings) {
    check_shapes(network, demand, injections);
    const Index horizon = network.horizon();
    MarketOutcome out;
    out.generation.resize(network.n_buses, horizon);
    out.lmps.resize(network.n_buses, horizon);
    out.balance_duals.resize(horizon);
    out.line_duals.resize(network.n_lines(), horizon);
    for (Index t = 0; t < horizon; ++t) {
        const PeriodResult r = clear_period(network, net_load(demand, injections, t), t, settings);
        out.generation.col(t) = r.g;
        out.lmps.col(t) = r.lmp;
        out.balance_duals(t) = r.zeta;
        out.line_duals.col(t) = r.mu;
        out.generation_cost += r.cost;
        out.kkt_residual = std::max(out.kkt_residual, r.kkt);
    }
    out.storage_cost = storage_costs;
    out.system_cost = out.generation_cost + storage_costs;
    return out;
}

NodalInjections nodal_injections(Index n_buses, const std::vector<StorageUnit>& units,
                                 const std::vector<StorageSchedule>& schedules) {
    if (units.size() != schedules.size()) throw DimensionMismatch("one schedule per unit required");
    if (units.empty()) throw DimensionMismatch("cannot infer the horizon without units");
    const Index horizon = schedules.front().horizon();
    NodalInjections d = NodalInjections::Zero(n_buses, horizon);
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (schedules[i].horizon() != horizon) throw DimensionMismatch("schedule horizons differ");
        d.row(units[i].bus) += schedules[i].net().transpose();
    }
    return d;
}

Matrix injection_map(Index n_buses, const std::vector<StorageUnit>& units, Index horizon, Index t) {
    Matrix p = Matrix::Zero(n_buses, 2 * horizon * static_cast<Index>(units.size()));
    for (std::size_t i = 0; i < units.size(); ++i) {
        const Index base = 2 * horizon * static_cast<Index>(i);
        p(units[i].bus, base + t) += 1.0;
        p(units[i].bus, base + horizon + t) -= 1.0;
    }
    return p;
}

double system_cost(const Network& network, const DemandProfile& demand, const std::vector<StorageUnit>& units,
                   const std::vector<StorageSchedule>& schedules, const solver::SolverSettings& settings) {
    double own = 0.0;
    for (std::size_t i = 0; i < units.size(); ++i) own += storage_cost(units[i], schedules[i]);
    const NodalInjections d = units.empty() ? NodalInjections::Zero(network.n_buses, network.horizon())
                                            : nodal_injections(network.n_buses, units, schedules);
    return clear_market(network, demand, d, own, settings).system_cost;
}

std::vector<Matrix> price_demand_jacobian(const Network& network, const DemandProfile& demand,
                                          const NodalInjections& injections, const MarketOutcome& outcome) {
    check_shapes(network, demand, injections);
    const Index n = network.n_buses;
    std::vector<Matrix> blocks;
    for (Index t = 0; t < network.horizon(); ++t) {
        const Vector load = net_load(demand, injections, t);
        PeriodResult r;
        r.g = outcome.generation.col(t);
        const ActiveSet a = active_set(network, load, r);

        std::vector<Index> lines, bounds;
        for (Index l = 0; l < network.n_lines(); ++l)
            if (a.lines[static_cast<std::size_t>(l)]) lines.push_back(l);
        for (Index b = 0; b < n; ++b)
            if (a.bounds[static_cast<std::size_t>(b)]) bounds.push_back(b);
        const Index nl = static_cast<Index>(lines.size());
        const Index nb = static_cast<Index>(bounds.size());
        const Index m = 1 + nl + nb;

        // Unknowns (g, zeta, mu_active, nu_active); differentiate the KKT
        // system of the fixed active set with respect to q_t.
        Matrix kkt = Matrix::Zero(n + m, n + m);
        kkt.topLeftCorner(n, n) = network.gen_slope.col(t).asDiagonal();
        Matrix rows = Matrix::Zero(m, n);
        rows.row(0).setOnes();
        for (Index k = 0; k < nl; ++k) rows.row(1 + k) = network.shift_factors.row(lines[static_cast<std::size_t>(k)]);
        for (Index k = 0; k < nb; ++k) rows(1 + nl + k, bounds[static_cast<std::size_t>(k)]) = -1.0;
        kkt.topRightCorner(n, m) = rows.transpose();
        kkt.bottomLeftCorner(m, n) = rows;

        Matrix rhs = Matrix::Zero(n + m, n);
        rhs.row(n).setOnes();
        for (Index k = 0; k < nl; ++k) rhs.row(n + 1 + k) = network.shift_factors.row(lines[static_cast<std::size_t>(k)]);

        const Matrix sens = kkt.completeOrthogonalDecomposition().solve(rhs);
        Matrix jac = -Matrix::Ones(n, 1) * sens.row(n);
        for (Index k = 0; k < nl; ++k) {
            jac -= network.shift_factors.row(lines[static_cast<std::size_t>(k)]).transpose() * sens.row(n + 1 + k);
        }
        blocks.push_back(0.5 * (jac + jac.transpose()));
    }
    return blocks;
}

LmpSensitivityReport lmp_sensitivity_check(const Network& network, const DemandProfile& demand,
                                           const NodalInjections& injections, double step, double tolerance) {
    check_shapes(network, demand, injections);
    const solver::SolverSettings settings;
    LmpSensitivityReport report;
    for (Index t = 0; t < network.horizon(); ++t) {
        const Vector load = net_load(demand, injections, t);
        const PeriodResult base = clear_period(network, load, t, settings);
        const ActiveSet base_active = active_set(network, load, base);
        for (Index b = 0; b < network.n_buses; ++b) {
            Vector up = load, down = load;
            up(b) += step;
            down(b) -= step;
            PeriodResult r_up, r_down;
            try {
                r_up = clear_period(network, up, t, settings);
                r_down = clear_period(network, down, t, settings);
            } catch (const InfeasibleDispatch&) {
                report.degenerate = true;
                continue;
            }
            if (!(active_set(network, up, r_up) == base_active) || !(active_set(network, down, r_down) == base_active)) {
                report.degenerate = true;
                continue;
            }
            const double fd = (r_up.cost - r_down.cost) / (2.0 * step);
            const double dev = std::abs(fd - base.lmp(b)) / std::max(1.0, std::abs(base.lmp(b)));
            report.max_relative_deviation = std::max(report.max_relative_deviation, dev);
        }
    }
    report.passed = report.max_relative_deviation <= tolerance;
    return report;
}

ConvexityReport convexity_check(const Network& network, const DemandProfile& demand,
                                const std::vector<NodalInjections>& sample, unsigned seed, int pairs) {
    const solver::SolverSettings settings;
    ConvexityReport report;
    report.min_hessian_eigenvalue = std::numeric_limits<double>::infinity();
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> theta_dist(0.0, 1.0);

    std::vector<double> values;
    for (const auto& d : sample) values.push_back(generation_cost_at(network, demand, d, settings));

    if (sample.size() >= 2) {
        std::uniform_int_distribution<std::size_t> pick(0, sample.size() - 1);
        for (int k = 0; k < pairs; ++k) {
            const std::size_t i = pick(rng), j = pick(rng);
            const double theta = theta_dist(rng);
            const NodalInjections mix = theta * sample[i] + (1.0 - theta) * sample[j];
            const double gap = generation_cost_at(network, demand, mix, settings) -
                               (theta * values[i] + (1.0 - theta) * values[j]);
            report.worst_chord_violation = std::max(report.worst_chord_violation, gap);
            ++report.pairs_checked;
        }
    }

    const double h = 1e-3;
    const Index n = network.n_buses;
    for (const auto& d : sample) {
        for (Index t = 0; t < network.horizon(); ++t) {
            const Vector load = net_load(demand, d, t);
            const ActiveSet base = active_set(network, load, clear_period(network, load, t, settings));
            // S as a function of d_t is the period cost at load q_t - d_t.
            bool stable = true;
            auto cost = [&](Index i, double si, Index j, double sj) {
                Vector l = load;
                l(i) -= si * h;
                l(j) -= sj * h;
                const PeriodResult r = clear_period(network, l, t, settings);
                if (!(active_set(network, l, r) == base)) stable = false;
                return r.cost;
            };
            Matrix hess(n, n);
            try {
                for (Index i = 0; i < n; ++i) {
                    for (Index j = i; j < n; ++j) {
                        hess(i, j) = (cost(i, 1, j, 1) - cost(i, 1, j, -1) - cost(i, -1, j, 1) + cost(i, -1, j, -1)) /
                                     (4.0 * h * h);
                        hess(j, i) = hess(i, j);
                    }
                }
            } catch (const InfeasibleDispatch&) {
                stable = false;
            }
            if (!stable) continue;
            const double lowest = Eigen::SelfAdjointEigenSolver<Matrix>(hess).eigenvalues().minCoeff();
            report.min_hessian_eigenvalue = std::min(report.min_hessian_eigenvalue, lowest);
            ++report.hessians_checked;
        }
    }
    if (report.hessians_checked == 0) report.min_hessian_eigenvalue = 0.0;
    report.passed = report.worst_chord_violation <= 1e-9 && report.min_hessian_eigenvalue >= -1e-6;
    return report;
}

}  // namespace esagg
