#pragma once

// Single-shot aggregator game: the aggregator posts a price schedule per
// unit, each unit best-responds, and the aggregator trades the resulting
// injections at the cleared locational prices.

#include <string>
#include <vector>

#include "esagg/market.hpp"
#include "esagg/storage.hpp"

namespace esagg {

struct AggregatorConfig {
    double price_bound = 0.0;                // M
    std::vector<std::string> managed_units;  // unit ids

    void validate(const std::vector<StorageUnit>& units, const std::string& path = "aggregator") const;
};

/// Outer price search controls.
struct SearchSettings {
    double grid_resolution = 1e-6;  // final pattern step in price units
    int multistart = 4;             // number of starting points
    long max_evaluations = 500'000;  // follower re-solves across all starts
    double profit_tolerance = 1e-11;  // relative, for ties and push-down
    unsigned seed = 1;
    unsigned threads = 0;           // 0 = hardware concurrency
    solver::SolverSettings solver;

    void validate() const;
};

struct GameOutcome {
    std::vector<PriceSchedule> prices;
    std::vector<StorageSchedule> schedules;
    double agg_profit = 0.0;
    std::vector<double> su_profits;
    Matrix lmps_at_outcome;
    bool equilibrium = false;
    std::string status;  // "equilibrium" or "budget_exceeded"
    // Other price vectors whose leader profit ties the reported one within
    // the search tolerance, one entry per distinct local search result.
    std::vector<std::vector<PriceSchedule>> alternatives;
    long evaluations = 0;
};

/// Sum_i sum_t (lambda_{bus_i, t} - tau_it) d_it with lambda cleared at the
/// injections the schedules imply.
double agg_profit(const Network& network, const DemandProfile& demand, const std::vector<StorageUnit>& units,
                  const std::vector<PriceSchedule>& prices, const std::vector<StorageSchedule>& schedules,
                  const solver::SolverSettings& settings = {});

/// Leader-optimal prices against unique follower responses, found by
/// multistart pattern search. Among tied optima the lexicographically
/// smallest price vector (units in order, periods in order) is reported.
/// When the evaluation budget runs out the best point found so far is
/// returned with equilibrium = false.
GameOutcome solve_stackelberg(const Network& network, const DemandProfile& demand,
                              const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                              const SearchSettings& search = {});

/// Single leader, single follower game against unit `i` with every other
/// unit held at `fixed_prices` / `fixed_schedules`. The reported agg_profit
/// is the aggregator's total over all units; su_profits[i] is the unit's
/// defection profit.
GameOutcome defection_equilibrium(const Network& network, const DemandProfile& demand,
                                  const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                                  const std::vector<PriceSchedule>& fixed_prices,
                                  const std::vector<StorageSchedule>& fixed_schedules, std::size_t i,
                                  const SearchSettings& search = {});

// Two-period scalarization. Charging x in period 1 and discharging the
// stored energy in period 2 pays the unit -x * dtau, dtau = tau_1 - eta tau_2,
// with eta = eta_plus * eta_minus the round-trip efficiency.

double round_trip_efficiency(const StorageUnit& unit);

/// Charge x in period 1, discharge eta x in period 2.
StorageSchedule two_period_schedule(const StorageUnit& unit, double x);

/// Lexicographically smallest tau in [0, M]^2 with tau_1 - eta tau_2 = dtau.
/// Throws ValidationError when no such tau exists.
PriceSchedule two_period_prices(const StorageUnit& unit, double dtau, double price_bound);

double two_period_dtau(const StorageUnit& unit, const PriceSchedule& prices);

}  // namespace esagg
