#pragma once

// Nash bargaining between the aggregator and each unit, with schedules
// pinned at the aggregate-profit optimum and prices restricted to those that
// sustain cooperation in the repeated game.

#include <iosfwd>
#include <vector>

#include "esagg/cooperation.hpp"

namespace esagg {

/// pi(d) = sum_t lambda_t(d)^T d_t - sum_i c_i(d_i): aggregator plus unit
/// profits, with the internal payments cancelled.
double aggregate_profit(const Network& network, const DemandProfile& demand, const std::vector<StorageUnit>& units,
                        const std::vector<StorageSchedule>& schedules, const solver::SolverSettings& settings = {});

struct AggregateOptimum {
    std::vector<StorageSchedule> schedules;  // d*
    double profit = 0.0;                     // pi(d*)
    double revenue = 0.0;                    // sum_t lambda_t^T d_t at d*
    int iterations = 0;
};

/// Maximizes pi(d) over the units' feasible sets by sequential quadratic
/// models built from the price response of the cleared market, started from
/// zero and from the social optimum. Prices are piecewise affine in d, so
/// the model is exact within one active-set region.
AggregateOptimum max_aggregate_profit(const Network& network, const DemandProfile& demand,
                                      const std::vector<StorageUnit>& units,
                                      const solver::SolverSettings& settings = {});

struct Disagreement {
    double agg_profit = 0.0;  // pi_a'
    double su_profit = 0.0;   // pi_s'
    PriceSchedule prices;
    StorageSchedule schedule;
};

struct BargainingProblem {
    Network network;
    DemandProfile demand;
    std::vector<StorageUnit> units;
    AggregatorConfig config;
    double discount = 0.0;
    SearchSettings search;
    AggregateOptimum optimum;
    // Added to every aggregator disagreement profit; zero except in
    // what-if studies of the aggregator's outside option.
    double agg_outside_option_shift = 0.0;
};

BargainingProblem make_bargaining_problem(const Network& network, const DemandProfile& demand,
                                          const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                                          double discount, const SearchSettings& search = {});

struct BargainingSlice {
    PriceSchedule prices;       // tau_hat_i
    double payment = 0.0;       // tau_hat_i^T d_i*
    double su_profit = 0.0;     // pi_s
    double agg_profit = 0.0;    // pi_a
    double nash_product = 0.0;
    double payment_min = 0.0;   // cooperative payment range
    double payment_max = 0.0;
    bool interior = false;      // symmetric split lies strictly inside the range
    Disagreement disagreement;
};

/// Bilateral slice for unit i with every other unit held at `agreed_prices`.
/// Throws EmptyBargainingSet when no price sustains cooperation at d*.
BargainingSlice nash_bargain(const BargainingProblem& problem, std::size_t i,
                             const std::vector<PriceSchedule>& agreed_prices);

struct BargainingOutcome {
    std::vector<PriceSchedule> agreed_prices;
    std::vector<StorageSchedule> agreed_schedules;  // d*
    double agg_profit = 0.0;
    std::vector<double> su_profits;
    std::vector<BargainingSlice> slices;
    int sweeps = 0;
    bool converged = false;
};

/// Bilateral slices swept to a fixed point (at most 100 sweeps, price change
/// below 1e-8). Slices within a sweep use the previous sweep's prices.
BargainingOutcome nash_bargain(const BargainingProblem& problem);

struct FrontierPoint {
    double pi_s = 0.0;
    double pi_a = 0.0;
    bool on_pareto_line = false;
    bool on_symmetry_line = false;
};

/// Points on the Pareto line pi_s + pi_a = const over the cooperative
/// payment range, points on the symmetry line through the disagreement
/// point, and their intersection flagged on both.
std::vector<FrontierPoint> bargaining_frontier(const BargainingProblem& problem, const BargainingOutcome& outcome,
                                               std::size_t i, int n_points);

/// Columns pi_s, pi_a, on_pareto_line, on_symmetry_line.
void write_frontier_csv(std::ostream& out, const std::vector<FrontierPoint>& points);

}  // namespace esagg
