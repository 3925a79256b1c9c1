#pragma once

// System-level comparisons: the cost-minimizing storage dispatch, the
// no-harm check for profit-seeking storage, and the market-power-mitigating
// payment that makes profit seeking bid the cost-minimizing dispatch.

#include <iosfwd>
#include <string>
#include <vector>

#include "esagg/bargaining.hpp"

namespace esagg {

struct SocialOptimum {
    std::vector<StorageSchedule> schedules;
    Matrix generation;
    double system_cost = 0.0;
};

/// Minimizes S(q, d) over the units' feasible sets as one QP in the
/// generation and storage variables jointly.
SocialOptimum social_optimum(const Network& network, const DemandProfile& demand,
                             const std::vector<StorageUnit>& units, const solver::SolverSettings& settings = {});

struct WelfareReport {
    double cost_no_storage = 0.0;   // S(q, 0)
    double cost_at_actions = 0.0;   // S(q, d)
    double cost_social = 0.0;       // S(q, d_social)
    double agg_su_profit = 0.0;     // pi(d)
    double load_payment = 0.0;      // sum_t lambda_t^T q_t at d
};

WelfareReport welfare_report(const Network& network, const DemandProfile& demand,
                             const std::vector<StorageUnit>& units, const std::vector<StorageSchedule>& schedules,
                             const solver::SolverSettings& settings = {});

struct NoHarmReport {
    double cost_no_storage = 0.0;
    double cost_at_actions = 0.0;
    double net_revenue = 0.0;        // sum_t lambda_t^T d_t
    double coalition_profit = 0.0;   // net_revenue - sum_i c_i(d_i)
    // The inequality is only claimed for non-adversarial players, i.e. when
    // the coalition of aggregator and units does not run at a loss.
    bool precondition_met = false;
    bool cost_not_increased = false;  // S(q, d) <= S(q, 0) + 1e-8
    // G(q, 0) - G(q, d) - sum_t lambda_t^T d_t with G the generation part of
    // the system cost and lambda evaluated at d. Nonnegative by convexity.
    double revenue_slack = 0.0;
    bool slack_nonnegative = false;
};

NoHarmReport verify_no_harm(const Network& network, const DemandProfile& demand,
                               const std::vector<StorageUnit>& units, const std::vector<StorageSchedule>& schedules,
                               const solver::SolverSettings& settings = {});

struct MpmpConfig {
    Matrix constants;  // C, bus x period

    void validate(const Network& network, const std::string& path = "mpmp") const;
};

struct MpmpPayments {
    Matrix payments;       // C_bt - integral of c_gen from 0 to g_bt
    Matrix prices;         // payment / d_bt where defined, NaN elsewhere
    std::vector<std::vector<bool>> price_defined;  // bus x period, |d_bt| > 1e-9
    double total = 0.0;
};

MpmpPayments mpmp_payment(const Network& network, const MarketOutcome& outcome, const NodalInjections& injections,
                          const MpmpConfig& config);

struct MpmpOutcome {
    std::vector<StorageSchedule> schedules;
    MpmpPayments payments;
    double agg_profit = 0.0;  // total payments minus the units' costs
    Matrix lmps;
    WelfareReport welfare;
    int iterations = 0;
};

/// Profit-maximizing dispatch of the aggregate when it is paid the MPMP.
/// Solved over the storage variables alone with the market cleared inside
/// every evaluation, independently of social_optimum.
MpmpOutcome clear_with_mpmp(const Network& network, const DemandProfile& demand,
                            const std::vector<StorageUnit>& units, const MpmpConfig& config,
                            const solver::SolverSettings& settings = {});

/// Uniform C making the aggregate MPMP profit equal `target`.
MpmpConfig mpmp_constants_for_profit(const Network& network, const DemandProfile& demand,
                                     const std::vector<StorageUnit>& units, double target,
                                     const solver::SolverSettings& settings = {});

struct RegulatedSplit {
    double su_profit = 0.0;
    double agg_profit = 0.0;
    // False when pi_reg < pi_a' + pi_s': no split leaves both sides above
    // their disagreement profits, and the closed form is reported as is.
    bool interior = false;
};

/// Nash split of a regulated aggregate profit:
/// pi_s = (pi_reg - (pi_a' - pi_s')) / 2, pi_a = (pi_reg + (pi_a' - pi_s')) / 2.
RegulatedSplit regulated_split(double regulated_profit, double agg_defection_profit, double su_defection_profit);

struct CurvePoint {
    double x = 0.0;
    double system_cost = 0.0;
    double aggregate_profit = 0.0;
    std::string label;  // "A" at x = 0, "B" at max profit, "C" at min cost
};

/// System cost and aggregate profit along the two-period family
/// charge x / discharge eta x of unit `i`, the others idle. Points B and C
/// are located exactly and inserted into the grid.
std::vector<CurvePoint> sweep_cost_profit_curves(const Network& network, const DemandProfile& demand,
                                                 const std::vector<StorageUnit>& units, std::size_t i,
                                                 double x_min, double x_max, int points,
                                                 const solver::SolverSettings& settings = {});

/// The same curves along the ray s * direction, s in [0, 1], with every unit
/// scaled together. With the social optimum as direction C sits at s = 1.
std::vector<CurvePoint> sweep_cost_profit_curves(const Network& network, const DemandProfile& demand,
                                                 const std::vector<StorageUnit>& units,
                                                 const std::vector<StorageSchedule>& direction, int points,
                                                 const solver::SolverSettings& settings = {});

/// Columns x, system_cost, aggregate_profit, label.
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points);

}  // namespace esagg
