#include <cmath>
#include <sstream>

#include "doctest.h"
#include "support/example1.hpp"
#include "support/paths.hpp"

using namespace esagg;

namespace {

BargainingProblem example1_problem() {
    return make_bargaining_problem(fixture::example1_network(), fixture::example1_demand(),
                                   {fixture::example1_unit()}, fixture::example1_config(), 0.98);
}

}  // namespace

TEST_CASE("aggregate optimum of every fixture") {
    const auto ex = fixture::oracle("example1")["aggregate_optimum"];
    const AggregateOptimum a = max_aggregate_profit(fixture::example1_network(), fixture::example1_demand(),
                                                    {fixture::example1_unit()});
    CHECK(a.schedules[0].d_minus(0) == doctest::Approx(ex["x"].get<double>()).epsilon(1e-7));
    CHECK(a.profit == doctest::Approx(ex["profit"].get<double>()).epsilon(1e-9));
    CHECK(a.revenue == doctest::Approx(ex["revenue"].get<double>()).epsilon(1e-8));

    for (const std::string name : {"twobus", "threeperiod"}) {
        CAPTURE(name);
        const Scenario s = fixture::scenario(name);
        const auto ref = fixture::oracle(name)["aggregate_optimum"];
        const AggregateOptimum opt = max_aggregate_profit(s.network, s.demand, s.units);
        CHECK(opt.profit == doctest::Approx(ref["profit"].get<double>()).epsilon(1e-6));
        CHECK((stack_schedules(opt.schedules) - fixture::vec(ref["x"])).cwiseAbs().maxCoeff() <= 1e-4);
        CHECK(aggregate_profit(s.network, s.demand, s.units, opt.schedules) == doctest::Approx(opt.profit));
    }
}

TEST_CASE("flat prices leave nothing to arbitrage") {
    Network n = fixture::example1_network();
    DemandProfile q(1, 2);
    q << 2.0, 2.0;
    const AggregateOptimum a = max_aggregate_profit(n, q, {fixture::example1_unit()});
    CHECK(a.schedules[0].stacked().cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(std::abs(a.profit) <= 1e-10);
}

TEST_CASE("symmetric split of the worked example") {
    const auto ref = fixture::oracle("example1")["nash_bargain"];
    const BargainingOutcome out = nash_bargain(example1_problem());
    CHECK(out.converged);
    REQUIRE(out.slices.size() == 1);
    const auto& s = out.slices[0];
    CHECK(two_period_dtau(fixture::example1_unit(), s.prices) ==
          doctest::Approx(ref["dtau"].get<double>()).epsilon(1e-5));
    CHECK(s.prices.tau(1) == doctest::Approx(ref["tau"][1].get<double>()).epsilon(1e-5));
    CHECK(s.su_profit == doctest::Approx(ref["su_profit"].get<double>()).epsilon(1e-5));
    CHECK(s.agg_profit == doctest::Approx(ref["agg_profit"].get<double>()).epsilon(1e-5));
    CHECK(s.payment == doctest::Approx(ref["payment"].get<double>()).epsilon(1e-5));
    CHECK(s.interior);
    CHECK(s.payment_min < s.payment);
    CHECK(s.payment < s.payment_max);
    CHECK(s.su_profit - s.disagreement.su_profit ==
          doctest::Approx(s.agg_profit - s.disagreement.agg_profit).epsilon(1e-9));
    CHECK(s.su_profit + s.agg_profit ==
          doctest::Approx(fixture::oracle("example1")["aggregate_optimum"]["profit"].get<double>()).epsilon(1e-9));
}

TEST_CASE("nash product is maximal against a price grid") {
    const BargainingProblem p = example1_problem();
    const BargainingOutcome out = nash_bargain(p);
    const auto& s = out.slices[0];
    const StorageUnit u = fixture::example1_unit();
    const StorageSchedule d = p.optimum.schedules[0];
    const double total = p.optimum.profit;
    double best = -1.0;
    for (double dtau = -1.6; dtau <= -1.0; dtau += 1e-4) {
        const double ps = su_profit(u, d, two_period_prices(u, dtau, 10.0));
        const double gs = ps - s.disagreement.su_profit;
        const double ga = (total - ps) - s.disagreement.agg_profit;
        if (gs >= 0.0 && ga >= 0.0) best = std::max(best, gs * ga);
    }
    CHECK(s.nash_product >= best - 1e-9);
    CHECK(s.nash_product - best <= 1e-6);
}

TEST_CASE("the split is efficient and independent of irrelevant alternatives") {
    const BargainingProblem p = example1_problem();
    const auto full = nash_bargain(p, 0, {PriceSchedule{Vector::Zero(2), 10.0}});
    // Pareto: no other payment in the range raises both profits.
    CHECK(full.su_profit + full.agg_profit == doctest::Approx(p.optimum.profit).epsilon(1e-9));
    // Shrinking the bound so the feasible prices still contain the agreed
    // one leaves the agreement unchanged.
    BargainingProblem narrower = p;
    narrower.config.price_bound = 2.0;
    narrower.search.solver = p.search.solver;
    const auto part = nash_bargain(narrower, 0, {PriceSchedule{Vector::Zero(2), 2.0}});
    if (std::abs(part.disagreement.agg_profit - full.disagreement.agg_profit) <= 1e-9 &&
        std::abs(part.disagreement.su_profit - full.disagreement.su_profit) <= 1e-9) {
        CHECK(part.payment == doctest::Approx(full.payment).epsilon(1e-7));
    } else {
        // A tighter bound changes the one-shot game itself; the split still
        // sits halfway between the new disagreement profits.
        CHECK(part.su_profit - part.disagreement.su_profit ==
              doctest::Approx(part.agg_profit - part.disagreement.agg_profit).epsilon(1e-9));
    }
}

TEST_CASE("a better outside option moves the split toward the aggregator") {
    BargainingProblem p = example1_problem();
    const auto base = nash_bargain(p, 0, {PriceSchedule{Vector::Zero(2), 10.0}});
    p.agg_outside_option_shift = 0.05;
    const auto shifted = nash_bargain(p, 0, {PriceSchedule{Vector::Zero(2), 10.0}});
    CHECK(shifted.agg_profit == doctest::Approx(base.agg_profit + 0.025).epsilon(1e-8));
    CHECK(shifted.su_profit == doctest::Approx(base.su_profit - 0.025).epsilon(1e-8));
}

TEST_CASE("frontier lines meet at the agreement") {
    const BargainingProblem p = example1_problem();
    const BargainingOutcome out = nash_bargain(p);
    const auto points = bargaining_frontier(p, out, 0, 21);
    const auto& s = out.slices[0];
    int both = 0;
    for (const auto& pt : points) {
        if (pt.on_pareto_line) CHECK(pt.pi_s + pt.pi_a == doctest::Approx(p.optimum.profit).epsilon(1e-9));
        if (pt.on_symmetry_line) {
            CHECK(pt.pi_s - s.disagreement.su_profit ==
                  doctest::Approx(pt.pi_a - s.disagreement.agg_profit).epsilon(1e-9));
        }
        if (pt.on_pareto_line && pt.on_symmetry_line) {
            ++both;
            CHECK(pt.pi_s == doctest::Approx(s.su_profit).epsilon(1e-9));
        }
    }
    CHECK(both == 1);
    std::ostringstream csv;
    write_frontier_csv(csv, points);
    CHECK(csv.str().rfind("pi_s,pi_a,on_pareto_line,on_symmetry_line\n", 0) == 0);
}

TEST_CASE("bargaining on the network fixtures") {
    for (const std::string name : {"twobus", "threeperiod"}) {
        CAPTURE(name);
        const Scenario sc = fixture::scenario(name);
        const auto p = make_bargaining_problem(sc.network, sc.demand, sc.units, sc.aggregator, sc.discount);
        const BargainingOutcome out = nash_bargain(p);
        CHECK(out.converged);
        double total = out.agg_profit;
        for (double v : out.su_profits) total += v;
        CHECK(total == doctest::Approx(p.optimum.profit).epsilon(1e-7));
        for (const auto& s : out.slices) {
            CHECK(s.su_profit >= s.disagreement.su_profit - 1e-9);
            CHECK(s.agg_profit >= s.disagreement.agg_profit - 1e-9);
        }
    }
}

TEST_CASE("bargained price matches a grid maximizer of the nash product") {
    const BargainingProblem p = example1_problem();
    const BargainingOutcome out = nash_bargain(p);
    const auto& s = out.slices[0];
    const StorageUnit u = fixture::example1_unit();
    const StorageSchedule d = p.optimum.schedules[0];
    double best = -1.0, arg = 0.0;
    // tau_2 on a 1e-4 grid with tau_1 = 0.
    for (int k = 0; k <= 30000; ++k) {
        const PriceSchedule prices{(Vector(2) << 0.0, k * 1e-4).finished(), 10.0};
        const double ps = su_profit(u, d, prices);
        const double gs = ps - s.disagreement.su_profit, ga = p.optimum.profit - ps - s.disagreement.agg_profit;
        if (gs >= 0.0 && ga >= 0.0 && gs * ga > best) best = gs * ga, arg = prices.tau(1);
    }
    CHECK(std::abs(arg - s.prices.tau(1)) <= 1e-3);
}

TEST_CASE("frontier points on the profit line sustain cooperation") {
    const BargainingProblem p = example1_problem();
    const BargainingOutcome out = nash_bargain(p);
    const ScalarCooperation game(p.network, p.demand, p.units[0], p.config, p.discount);
    const StorageUnit& u = p.units[0];
    const StorageSchedule& d = p.optimum.schedules[0];
    const double x = d.d_minus(0);
    for (const auto& pt : bargaining_frontier(p, out, 0, 21)) {
        if (!pt.on_pareto_line) continue;
        // pi_s = -x dtau - c(d), solved for dtau.
        const double dtau = -(pt.pi_s + storage_cost(u, d)) / x;
        const auto m = game.margins(x, dtau);
        CHECK(m.alpha_s >= -1e-7);
        CHECK(m.alpha_a >= -1e-7);
    }
}
