// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "support/example1.hpp"
#include "support/grid_oracle.hpp"
#include "support/paths.hpp"
#include "support/random_schedules.hpp"

using namespace esagg;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

// Rounds to the number of decimals a published value carries.
double rounded(double v, int decimals) {
    const double s = std::pow(10.0, decimals);
    return std::round(v * s) / s;
}

const Network net1 = fixture::example1_network();
const DemandProfile dem1 = fixture::example1_demand();
const StorageUnit unit1 = fixture::example1_unit();

Verdict stackelberg_reproduction() {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    const GameOutcome g = solve_stackelberg(net1, dem1, {unit1}, fixture::example1_config());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double dtau = two_period_dtau(unit1, g.prices[0]);
    const double x = g.schedules[0].d_minus(0);
    v.detail = fmt::format("dtau={:.4f} x={:.4f} pi_a={:.4f} pi_s={:.4f} t={:.3f}s", dtau, x, g.agg_profit,
                           g.su_profits[0], seconds);
    Verdict r;
    r.require(g.equilibrium, "search incomplete");
    r.require(within(dtau, -1.19, 0.01), "dtau");
    r.require(within(x, 0.62, 0.01), "charge");
    r.require(within(g.agg_profit, 1.48, 0.01), "pi_a");
    r.require(within(g.su_profits[0], 0.37, 0.01), "pi_s");
    r.require(seconds < 1.0, "runtime");
    v.pass = r.pass;
    if (!r.pass) v.detail += " | " + r.detail;
    return v;
}

Verdict pareto_witness() {
    const GameOutcome g = solve_stackelberg(net1, dem1, {unit1}, fixture::example1_config());
    const auto prices = two_period_prices(unit1, -1.25, 10.0);
    const auto sched = two_period_schedule(unit1, 0.7);
    const double ps = su_profit(unit1, sched, prices);
    const double pa = agg_profit(net1, dem1, {unit1}, {prices}, {sched});
    Verdict v;
    v.detail = fmt::format("witness ({:.6f}, {:.6f}) vs equilibrium ({:.6f}, {:.6f})", ps, pa, g.su_profits[0],
                           g.agg_profit);
    v.pass = ps > g.su_profits[0] + 1e-9 && pa > g.agg_profit + 1e-9;
    return v;
}

Verdict optimum_and_bargain() {
    const auto p = make_bargaining_problem(net1, dem1, {unit1}, fixture::example1_config(), 0.98);
    const BargainingOutcome b = nash_bargain(p);
    const double d1 = p.optimum.schedules[0].net()(0);
    const double dtau = two_period_dtau(unit1, b.slices[0].prices);
    Verdict v;
    v.detail = fmt::format("d1={:.4f} dtau={:.4f} profit={:.4f}", d1, dtau, p.optimum.profit);
    v.pass = within(d1, -0.83, 0.005) && within(dtau, -1.31, 0.01) && within(p.optimum.profit, 1.98, 0.01);
    return v;
}

Verdict cooperation_endpoints() {
    const ScalarCooperation game(net1, dem1, unit1, fixture::example1_config(), 0.98);
    const auto opt = max_aggregate_profit(net1, dem1, {unit1});
    const CooperationInterval in = cooperation_interval(game, opt.schedules[0].d_minus(0));
    Verdict v;
    // The published aggregator endpoint is rounded; recomputing it from the
    // stated profits gives about -1.385.
    v.detail = fmt::format("su endpoint {:.4f} ({}), aggregator endpoint {:.4f} ({})", in.upper, in.upper_binding,
                           in.lower, in.lower_binding);
    v.pass = !in.empty && in.upper_binding == "su" && in.lower_binding == "aggregator" &&
             within(in.upper, -1.23, 0.02) && within(in.lower, -1.37, 0.03);
    return v;
}

Verdict comparison_table() {
    const auto rows = compare_outcomes(fixture::scenario("example1"));
    struct Expected {
        double profit, cost, payment;
    };
    const Expected expected[2] = {{1.89, 9.65, 20.3}, {1.98, 9.86, 21.1}};
    Verdict v;
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& r = rows.at(k);
        const double profit = rounded(r.profit, 2), cost = rounded(r.system_cost, 2),
                     payment = rounded(r.load_payment, 1);
        v.detail += fmt::format("{}{}: ({:.2f}, {:.2f}, {:.1f})", k ? "; " : "", r.label, profit, cost, payment);
        // Half a unit in the last published place on top of the tolerance.
        v.pass = v.pass && within(profit, expected[k].profit, 0.02 + 0.005) &&
                 within(cost, expected[k].cost, 0.02 + 0.005) && within(payment, expected[k].payment, 0.02 + 0.05);
    }
    if (!v.pass) {
        // The published load payment matches the price at the rounded
        // storage level, not at the exact optimum.
        const StorageUnit u = fixture::example1_unit();
        const double at_rounded =
            welfare_report(net1, dem1, {u}, {two_period_schedule(u, 0.83)}).load_payment;
        v.detail += fmt::format(" | load payment at d1 = -0.83 is {:.4f}", at_rounded);
    }
    return v;
}

Verdict no_harm() {
    Verdict v;
    int checked = 0, cost_failures = 0, slack_failures = 0, revenue_only = 0, revenue_only_failures = 0;
    for (const auto& name : fixture::fixture_names()) {
        const Scenario s = fixture::scenario(name);
        std::mt19937 rng(2024);
        int accepted = 0, drawn = 0;
        while (accepted < 500 && drawn < 20000) {
            ++drawn;
            const auto d = fixture::random_schedules(s.units, s.network.horizon(), rng);
            const NoHarmReport r = verify_no_harm(s.network, s.demand, s.units, d);
            if (r.net_revenue >= 0.0) {
                ++revenue_only;
                if (!r.cost_not_increased) ++revenue_only_failures;
            }
            if (!r.precondition_met) continue;
            ++accepted;
            ++checked;
            if (!r.cost_not_increased) ++cost_failures;
            if (!r.slack_nonnegative) ++slack_failures;
        }
        v.require(accepted == 500, name + ": too few non-adversarial samples");
    }
    v.pass = v.pass && cost_failures == 0 && slack_failures == 0;
    v.detail = fmt::format(
        "{} non-adversarial schedules, {} cost increases, {} negative slacks "
        "(requiring only net revenue >= 0: {} of {} raise the cost)",
        checked, cost_failures, slack_failures, revenue_only_failures, revenue_only) +
        (v.detail.empty() ? "" : "; " + v.detail);
    return v;
}

Verdict mitigation() {
    Verdict v;
    double worst_schedule = 0.0, worst_identity = 0.0;
    for (const auto& name : fixture::fixture_names()) {
        const Scenario s = fixture::scenario(name);
        const MpmpConfig c = s.mpmp ? *s.mpmp : MpmpConfig{Matrix::Zero(s.network.n_buses, s.network.horizon())};
        const SocialOptimum so = social_optimum(s.network, s.demand, s.units);
        const MpmpOutcome m = clear_with_mpmp(s.network, s.demand, s.units, c);
        worst_schedule = std::max(
            worst_schedule, (stack_schedules(m.schedules) - stack_schedules(so.schedules)).cwiseAbs().maxCoeff());
        // 50 points on the segment from idle storage to the social optimum.
        for (int k = 0; k < 50; ++k) {
            const double a = k / 49.0;
            std::vector<StorageSchedule> d = so.schedules;
            double unit_cost = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i].d_plus *= a;
                d[i].d_minus *= a;
                unit_cost += storage_cost(s.units[i], d[i]);
            }
            const NodalInjections inj = nodal_injections(s.network.n_buses, s.units, d);
            const MarketOutcome out = clear_market(s.network, s.demand, inj);
            const double profit = mpmp_payment(s.network, out, inj, c).total - unit_cost;
            const double sum = profit + system_cost(s.network, s.demand, s.units, d);
            worst_identity = std::max(worst_identity, std::abs(sum - c.constants.sum()));
        }
    }
    v.detail = fmt::format("max schedule gap {:.2e}, max identity error {:.2e}", worst_schedule, worst_identity);
    v.pass = worst_schedule <= 1e-4 && worst_identity <= 1e-9;
    return v;
}

Verdict defection_timing() {
    const ScalarCooperation game(net1, dem1, unit1, fixture::example1_config(), 0.98);
    const double delta = game.discount();
    int cells = 0, wrong = 0;
    // Which round maximizes the long-term profit, -1 for never.
    auto best_round = [&](double coop, double deviation, double punishment) {
        double best = long_term_profit(coop, deviation, punishment, delta, std::nullopt);
        int round = -1;
        for (int r = 0; r <= 200; ++r) {
            const double value = long_term_profit(coop, deviation, punishment, delta, r);
            if (value > best + 1e-12 * std::max(1.0, std::abs(best))) {
                best = value;
                round = r;
            }
        }
        return round;
    };
    for (int i = 0; i < 20; ++i) {
        const double x = 0.05 + 0.95 * i / 19.0;
        for (int j = 0; j < 20; ++j) {
            const double dtau = -2.0 + 1.9 * j / 19.0;
            const auto m = game.margins(x, dtau);
            ++cells;
            const bool su_stays = best_round(m.su_profit, m.deviation_profit, game.su_defection_profit()) < 0;
            // The aggregator's best deviation is the leader price it would
            // post anyway, so deviation and punishment profits coincide.
            const bool agg_stays =
                best_round(m.agg_profit, game.agg_defection_profit(), game.agg_defection_profit()) < 0;
            if (su_stays != (m.alpha_s >= -1e-9)) ++wrong;
            if (agg_stays != (m.alpha_a >= -1e-9)) ++wrong;
        }
    }
    Verdict v;
    v.detail = fmt::format("{} cells, {} misclassified", cells, wrong);
    v.pass = wrong == 0;
    return v;
}

Verdict regulated_profit() {
    const GameOutcome g = solve_stackelberg(net1, dem1, {unit1}, fixture::example1_config());
    const double pa = g.agg_profit, ps = g.su_profits[0];
    double worst = 0.0;
    for (double reg : {1.0, 2.0, 3.0}) {
        const double h = 1e-3;
        const auto lo = regulated_split(reg - h, pa, ps), hi = regulated_split(reg + h, pa, ps);
        worst = std::max(worst, std::abs((hi.agg_profit - lo.agg_profit) / (2 * h) - 0.5));
        worst = std::max(worst, std::abs((hi.su_profit - lo.su_profit) / (2 * h) - 0.5));
    }
    Verdict v;
    v.detail = fmt::format("gap pi_a' - pi_s' = {:.4f}, max derivative error {:.2e}", pa - ps, worst);
    v.pass = worst <= 1e-9;
    return v;
}

Verdict numerical_hygiene() {
    Verdict v;
    double worst_lmp = 0.0, worst_br = 0.0, worst_kkt = 0.0;
    for (const auto& name : fixture::fixture_names()) {
        const Scenario s = fixture::scenario(name);
        const auto opt = max_aggregate_profit(s.network, s.demand, s.units);
        for (const NodalInjections& d :
             {NodalInjections(NodalInjections::Zero(s.network.n_buses, s.network.horizon())),
              nodal_injections(s.network.n_buses, s.units, opt.schedules)}) {
            const auto r = lmp_sensitivity_check(s.network, s.demand, d);
            if (!r.degenerate) worst_lmp = std::max(worst_lmp, r.max_relative_deviation);
            worst_kkt = std::max(worst_kkt, clear_market(s.network, s.demand, d).kkt_residual);
        }
    }
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> price(0.0, 4.0);
    for (int k = 0; k < 10; ++k) {
        const StorageUnit u = fixture::random_unit(rng);
        const Vector tau = (Vector(2) << price(rng), price(rng)).finished();
        const PriceSchedule p{tau, 10.0};
        const StorageSchedule s = su_best_response(u, p);
        worst_br = std::max(worst_br, std::abs(su_profit(u, s, p) - fixture::grid_best_profit(u, tau)));

        // The same best response as an explicit QP, with its KKT residual
        // recomputed from the returned primal/dual point.
        const StorageConstraints c = storage_constraints(u, 2);
        solver::ConvexProgram qp = solver::ConvexProgram::quadratic(
            storage_cost_hessian(u, 2), (Vector(4) << -tau, tau).finished());
        qp.eq_matrix = c.eq_matrix;
        qp.eq_rhs = c.eq_rhs;
        qp.ineq_matrix = c.ineq_matrix;
        qp.ineq_rhs = c.ineq_rhs;
        const solver::Solution sol = solver::solve(qp);
        worst_kkt = std::max(worst_kkt, solver::kkt_report(qp, sol.point, sol.eq_duals, sol.ineq_duals).max());
    }
    v.detail = fmt::format("LMP deviation {:.2e}, best response vs grid {:.2e}, KKT {:.2e}", worst_lmp, worst_br,
                           worst_kkt);
    v.pass = worst_lmp <= 1e-4 && worst_br <= 1e-3 && worst_kkt <= 1e-8;
    return v;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"leader equilibrium of the two-period example", stackelberg_reproduction},
        {"bounded prices beating the equilibrium for both sides", pareto_witness},
        {"aggregate optimum and bargained price", optimum_and_bargain},
        {"cooperation interval endpoints", cooperation_endpoints},
        {"social optimum versus market clearing table", comparison_table},
        {"profit seeking storage never raises system cost", no_harm},
        {"mitigating payment clears at the social optimum", mitigation},
        {"margins predict the best defection round", defection_timing},
        {"regulated profit split derivatives", regulated_profit},
        {"numerical hygiene", numerical_hygiene},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("error: ") + e.what();
        }
        if (!v.pass) ++failed;
        fmt::print("{} {:2d} {}: {}\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, v.detail);
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
