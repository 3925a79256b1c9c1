#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "support/example1.hpp"
#include "support/paths.hpp"
#include "support/random_schedules.hpp"

using namespace esagg;

namespace {

MpmpConfig uniform(const Network& n, double c) { return {Matrix::Constant(n.n_buses, n.horizon(), c)}; }

}  // namespace

TEST_CASE("social optimum of the worked example") {
    const auto ref = fixture::oracle("example1")["social_optimum"];
    const SocialOptimum so =
        social_optimum(fixture::example1_network(), fixture::example1_demand(), {fixture::example1_unit()});
    CHECK(so.schedules[0].d_minus(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(so.schedules[0].d_plus(1) == doctest::Approx(0.95).epsilon(1e-8));
    CHECK(so.system_cost == doctest::Approx(ref["system_cost"].get<double>()).epsilon(1e-9));

    // One-dimensional grid along the charge/discharge family.
    const StorageUnit u = fixture::example1_unit();
    double best_x = 0.0, best = 1e300;
    for (int k = 0; k <= 10000; ++k) {
        const double x = k * 1e-4;
        const double s = system_cost(fixture::example1_network(), fixture::example1_demand(), {u},
                                     {two_period_schedule(u, x)});
        if (s < best) best = s, best_x = x;
    }
    CHECK(best_x == doctest::Approx(1.0));
    CHECK(so.system_cost <= best + 1e-12);
}

TEST_CASE("social optimum on the network fixtures") {
    for (const std::string name : {"twobus", "threeperiod"}) {
        CAPTURE(name);
        const Scenario s = fixture::scenario(name);
        const auto ref = fixture::oracle(name)["social_optimum"];
        const SocialOptimum so = social_optimum(s.network, s.demand, s.units);
        CHECK(so.system_cost == doctest::Approx(ref["system_cost"].get<double>()).epsilon(1e-8));
        CHECK((stack_schedules(so.schedules) - fixture::vec(ref["x"])).cwiseAbs().maxCoeff() <= 1e-5);
        CHECK(system_cost(s.network, s.demand, s.units, so.schedules) == doctest::Approx(so.system_cost));
    }
}

TEST_CASE("a unit without capacity leaves the system cost alone") {
    StorageUnit u = fixture::example1_unit();
    u.d_plus_max = u.d_minus_max = 0.0;
    const SocialOptimum so = social_optimum(fixture::example1_network(), fixture::example1_demand(), {u});
    CHECK(so.schedules[0].stacked().cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(so.system_cost == doctest::Approx(12.5));
}

TEST_CASE("welfare report of the market clearing point") {
    const auto ref = fixture::oracle("example1");
    const StorageUnit u = fixture::example1_unit();
    const double x = ref["aggregate_optimum"]["x"].get<double>();
    const WelfareReport r = welfare_report(fixture::example1_network(), fixture::example1_demand(), {u},
                                           {two_period_schedule(u, x)});
    CHECK(r.cost_no_storage == doctest::Approx(12.5));
    CHECK(r.cost_at_actions == doctest::Approx(ref["market_clearing"]["system_cost"].get<double>()).epsilon(1e-9));
    CHECK(r.cost_social == doctest::Approx(ref["social_optimum"]["system_cost"].get<double>()).epsilon(1e-9));
    CHECK(r.agg_su_profit == doctest::Approx(ref["aggregate_optimum"]["profit"].get<double>()).epsilon(1e-9));
    CHECK(r.load_payment == doctest::Approx(ref["market_clearing"]["load_payment"].get<double>()).epsilon(1e-9));
    CHECK(r.cost_social <= r.cost_at_actions);
    CHECK(r.cost_at_actions <= r.cost_no_storage);
}

TEST_CASE("profit seeking storage never raises the system cost") {
    const StorageUnit u = fixture::example1_unit();
    const NoHarmReport idle = verify_no_harm(fixture::example1_network(), fixture::example1_demand(), {u},
                                                {StorageSchedule::zero(2)});
    CHECK(idle.cost_at_actions == doctest::Approx(idle.cost_no_storage));
    CHECK(idle.cost_not_increased);
    CHECK(std::abs(idle.revenue_slack) <= 1e-12);

    for (const auto& name : fixture::fixture_names()) {
        CAPTURE(name);
        const Scenario s = fixture::scenario(name);
        std::mt19937 rng(17);
        int checked = 0;
        for (int k = 0; k < 100; ++k) {
            const auto d = fixture::random_schedules(s.units, s.network.horizon(), rng);
            const NoHarmReport r = verify_no_harm(s.network, s.demand, s.units, d);
            CHECK(r.slack_nonnegative);
            CHECK(r.revenue_slack >= -1e-8);
            if (!r.precondition_met) continue;
            ++checked;
            CHECK(r.cost_not_increased);
            CHECK(r.cost_at_actions <= r.cost_no_storage + 1e-8);
        }
        CHECK(checked > 10);
    }
}

TEST_CASE("payments and prices under the mitigating mechanism") {
    const Network n = fixture::example1_network();
    const StorageUnit u = fixture::example1_unit();
    const MpmpConfig c{(Matrix(1, 2) << 0.7, 1.3).finished()};
    for (double x : {0.1, 0.4, 0.9}) {
        const auto s = two_period_schedule(u, x);
        const NodalInjections d = nodal_injections(1, {u}, {s});
        const MarketOutcome out = clear_market(n, fixture::example1_demand(), d);
        const MpmpPayments p = mpmp_payment(n, out, d, c);
        const double d1 = d(0, 0);
        CHECK(p.prices(0, 0) == doctest::Approx(-(d1 * d1 - 2.0 * 0.7) / (2.0 * d1)).epsilon(1e-12));
        CHECK(p.price_defined[0][0]);
    }
    // Paying exactly the generation cost integral nets to zero.
    const NodalInjections zero = NodalInjections::Zero(1, 2);
    const MarketOutcome idle = clear_market(n, fixture::example1_demand(), zero);
    const MpmpConfig exact{(Matrix(1, 2) << 0.0, 12.5).finished()};
    const MpmpPayments p = mpmp_payment(n, idle, zero, exact);
    CHECK(p.payments.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_FALSE(p.price_defined[0][1]);
    CHECK(std::isnan(p.prices(0, 1)));
}

TEST_CASE("mitigated profit plus system cost is constant") {
    for (const auto& name : fixture::fixture_names()) {
        CAPTURE(name);
        const Scenario s = fixture::scenario(name);
        const MpmpConfig c = uniform(s.network, 0.8);
        const double total_c = c.constants.sum();
        std::mt19937 rng(23);
        for (int k = 0; k < 50; ++k) {
            const auto d = fixture::random_schedules(s.units, s.network.horizon(), rng);
            const NodalInjections inj = nodal_injections(s.network.n_buses, s.units, d);
            const MarketOutcome out = clear_market(s.network, s.demand, inj);
            double unit_cost = 0.0;
            for (std::size_t i = 0; i < s.units.size(); ++i) unit_cost += storage_cost(s.units[i], d[i]);
            const double profit = mpmp_payment(s.network, out, inj, c).total - unit_cost;
            CHECK(std::abs(profit + system_cost(s.network, s.demand, s.units, d) - total_c) <= 1e-9);
        }
    }
}

TEST_CASE("mitigated dispatch is the social optimum") {
    for (const auto& name : fixture::fixture_names()) {
        CAPTURE(name);
        const Scenario s = fixture::scenario(name);
        const SocialOptimum so = social_optimum(s.network, s.demand, s.units);
        const MpmpOutcome m = clear_with_mpmp(s.network, s.demand, s.units, uniform(s.network, 0.0));
        CHECK((stack_schedules(m.schedules) - stack_schedules(so.schedules)).cwiseAbs().maxCoeff() <= 1e-4);
        CHECK(m.agg_profit == doctest::Approx(-so.system_cost).epsilon(1e-7));

        // A uniform shift moves the profit and nothing else.
        const double shift = 0.4;
        const MpmpOutcome up = clear_with_mpmp(s.network, s.demand, s.units, uniform(s.network, shift));
        CHECK((stack_schedules(up.schedules) - stack_schedules(m.schedules)).cwiseAbs().maxCoeff() <= 1e-6);
        const double cells = static_cast<double>(s.network.n_buses * s.network.horizon());
        CHECK(up.agg_profit - m.agg_profit == doctest::Approx(shift * cells).epsilon(1e-7));
    }
    const auto ex = clear_with_mpmp(fixture::example1_network(), fixture::example1_demand(),
                                    {fixture::example1_unit()}, {Matrix::Zero(1, 2)});
    CHECK(ex.schedules[0].d_minus(0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(ex.schedules[0].d_plus(1) == doctest::Approx(0.95).epsilon(1e-5));
    CHECK(ex.agg_profit == doctest::Approx(-9.6525).epsilon(1e-7));
}

TEST_CASE("constants can target a regulated profit") {
    const Network n = fixture::example1_network();
    const MpmpConfig c = mpmp_constants_for_profit(n, fixture::example1_demand(), {fixture::example1_unit()}, 1.0);
    CHECK(c.constants(0, 0) == doctest::Approx(5.32625).epsilon(1e-9));
    const MpmpOutcome m = clear_with_mpmp(n, fixture::example1_demand(), {fixture::example1_unit()}, c);
    CHECK(m.agg_profit == doctest::Approx(1.0).epsilon(1e-7));
    MpmpConfig bad{Matrix::Zero(2, 2)};
    CHECK_THROWS_AS(bad.validate(n), ValidationError);
}

TEST_CASE("regulated profit is split evenly above the disagreement gap") {
    const auto st = fixture::oracle("example1")["stackelberg"];
    const double pa = st["agg_profit"].get<double>(), ps = st["su_profit"].get<double>();
    CHECK(pa - ps == doctest::Approx(1.11).epsilon(0.01));
    for (double reg : {1.0, 2.0, 3.0}) {
        const double h = 1e-3;
        const RegulatedSplit lo = regulated_split(reg - h, pa, ps), hi = regulated_split(reg + h, pa, ps);
        CHECK(std::abs((hi.agg_profit - lo.agg_profit) / (2 * h) - 0.5) <= 1e-9);
        CHECK(std::abs((hi.su_profit - lo.su_profit) / (2 * h) - 0.5) <= 1e-9);
        const RegulatedSplit r = regulated_split(reg, pa, ps);
        CHECK(r.agg_profit - r.su_profit == doctest::Approx(pa - ps));
        CHECK(r.agg_profit + r.su_profit == doctest::Approx(reg));
    }
    CHECK_FALSE(regulated_split(1.0, pa, ps).interior);
    CHECK(regulated_split(3.0, pa, ps).interior);
    const RegulatedSplit even = regulated_split(2.0, 0.3, 0.3);
    CHECK(even.agg_profit == doctest::Approx(1.0));
    CHECK(even.su_profit == doctest::Approx(1.0));
}

TEST_CASE("cost and profit curves with their marked points") {
    const auto ref = fixture::oracle("example1");
    const auto pts = sweep_cost_profit_curves(fixture::example1_network(), fixture::example1_demand(),
                                              {fixture::example1_unit()}, 0, 0.0, 1.0, 101);
    const CurvePoint *a = nullptr, *b = nullptr, *c = nullptr;
    for (const auto& p : pts) {
        if (p.label == "A") a = &p;
        if (p.label == "B") b = &p;
        if (p.label == "C") c = &p;
    }
    REQUIRE(a);
    REQUIRE(b);
    REQUIRE(c);
    CHECK(a->x == 0.0);
    CHECK(std::abs(a->aggregate_profit) <= 1e-12);
    CHECK(a->system_cost == doctest::Approx(12.5));
    CHECK(b->x == doctest::Approx(ref["aggregate_optimum"]["x"].get<double>()).epsilon(1e-6));
    CHECK(c->x == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(b->system_cost < a->system_cost);
    CHECK(c->system_cost <= b->system_cost);
    CHECK(b->x < c->x);
    // Second differences of the cost on the uniform grid points.
    std::vector<const CurvePoint*> uniform_pts;
    for (const auto& p : pts) {
        if (p.label.empty() || p.label == "A") uniform_pts.push_back(&p);
    }
    for (std::size_t k = 1; k + 1 < uniform_pts.size(); ++k) {
        const double dd = uniform_pts[k - 1]->system_cost - 2 * uniform_pts[k]->system_cost +
                          uniform_pts[k + 1]->system_cost;
        CHECK(dd >= -1e-9);
    }
    std::ostringstream csv;
    write_curve_csv(csv, pts);
    CHECK(csv.str().rfind("x,system_cost,aggregate_profit,label\n", 0) == 0);
}
