#pragma once

// DC market clearing with affine marginal generation costs.
//
// Each period t is cleared independently:
//     minimize    sum_b (a_bt g_bt + 1/2 b_bt g_bt^2)
//     subject to  1^T g_t - 1^T q_t + 1^T d_t = 0                  (zeta_t)
//                 H (g_t - q_t + d_t) <= f                          (mu_t)
//                 g_t >= 0
// where d_t holds the net storage injections per bus (positive means
// discharge into the grid). Rows of H are one-directional; a two-sided
// limit is modelled by listing the line once per orientation.
//
// Locational prices follow lambda_t = -1 zeta_t - H^T mu_t, which in an
// uncongested single-bus system equals the marginal generation cost.

#include <vector>

#include "esagg/solver.hpp"
#include "esagg/storage.hpp"

namespace esagg {

struct Network {
    Index n_buses = 0;
    Matrix gen_intercept;   // a, bus x period
    Matrix gen_slope;       // b >= 0, bus x period
    Matrix shift_factors;   // H, line x bus
    Vector line_limits;     // f >= 0

    Index horizon() const { return gen_intercept.cols(); }
    Index n_lines() const { return shift_factors.rows(); }

    /// Integral of the marginal cost from 0 to g at (bus, t).
    double generation_cost(Index bus, Index t, double g) const {
        return gen_intercept(bus, t) * g + 0.5 * gen_slope(bus, t) * g * g;
    }

    void validate(const std::string& path = "network") const;
};

/// Nodal demand q, bus x period, nonnegative.
using DemandProfile = Matrix;

/// Net storage injections per bus and period, positive = discharge.
using NodalInjections = Matrix;

struct MarketOutcome {
    Matrix generation;       // g, bus x period
    Matrix lmps;             // lambda, bus x period
    Vector balance_duals;    // zeta, per period
    Matrix line_duals;       // mu, line x period
    double generation_cost = 0.0;
    double storage_cost = 0.0;
    double system_cost = 0.0;  // generation_cost + storage_cost
    double kkt_residual = 0.0;  // worst over periods
};

void validate_demand(const Network& network, const DemandProfile& demand, const std::string& path = "demand");

/// Throws InfeasibleDispatch when no g >= 0 balances the period within the
/// line limits.
MarketOutcome clear_market(const Network& network, const DemandProfile& demand, const NodalInjections& injections,
                           double storage_costs = 0.0, const solver::SolverSettings& settings = {});

/// Sum_i m_i (d+_i - d-_i) per bus and period.
NodalInjections nodal_injections(Index n_buses, const std::vector<StorageUnit>& units,
                                 const std::vector<StorageSchedule>& schedules);

/// Matrix P_t with d_t = P_t x for unit-by-unit stacked variables x.
Matrix injection_map(Index n_buses, const std::vector<StorageUnit>& units, Index horizon, Index t);

/// S(q, d): cleared generation cost plus the units' own costs.
double system_cost(const Network& network, const DemandProfile& demand, const std::vector<StorageUnit>& units,
                   const std::vector<StorageSchedule>& schedules, const solver::SolverSettings& settings = {});

/// Jacobian of lambda_t with respect to q_t for a fixed active set at the
/// given cleared outcome, one bus x bus block per period. Prices move
/// opposite to injections: d lambda_t / d d_t = -block.
std::vector<Matrix> price_demand_jacobian(const Network& network, const DemandProfile& demand,
                                          const NodalInjections& injections, const MarketOutcome& outcome);

struct LmpSensitivityReport {
    double max_relative_deviation = 0.0;
    bool degenerate = false;  // active set changed inside the difference step
    bool passed = false;
};

/// Compares each lambda_bt against a central difference of the system cost
/// in q_bt with step `step`.
LmpSensitivityReport lmp_sensitivity_check(const Network& network, const DemandProfile& demand,
                                           const NodalInjections& injections, double step = 1e-5,
                                           double tolerance = 1e-4);

struct ConvexityReport {
    double worst_chord_violation = 0.0;   // max S(mix) - mix of S, should be <= 1e-9
    double min_hessian_eigenvalue = 0.0;  // over interior samples with stable active sets
    int pairs_checked = 0;
    int hessians_checked = 0;
    bool passed = false;
};

/// Chord inequality on random pairs of the sample and a finite-difference
/// Hessian of S in d_t at each sample point whose active set is stable.
ConvexityReport convexity_check(const Network& network, const DemandProfile& demand,
                                const std::vector<NodalInjections>& sample, unsigned seed = 1, int pairs = 50);

}  // namespace esagg
