#pragma once

// Storage unit model and the unit's profit-maximizing response to a price
// schedule.
//
// Decision variables for a horizon of T periods are stacked as
//     x = [d+_1 .. d+_T, d-_1 .. d-_T]
// with d+ the discharge (energy delivered to the grid) and d- the charge
// (energy drawn from the grid). State of charge evolves as
//     s_t = s_{t-1} + eta_minus * d-_t - d+_t / eta_plus.

#include <string>
#include <vector>

#include "esagg/solver.hpp"

namespace esagg {

using solver::Index;
using solver::Matrix;
using solver::Vector;

/// c(d) = 1/2 sum_t (w_plus d+_t^2 + w_minus d-_t^2 + 2 w_cross d+_t d-_t).
struct StorageCost {
    double w_plus = 1.0;
    double w_minus = 1.0;
    double w_cross = 0.0;
};

struct StorageUnit {
    std::string id;
    Index bus = 0;
    double eta_plus = 1.0;
    double eta_minus = 1.0;
    double d_plus_max = 0.0;
    double d_minus_max = 0.0;
    double soc_min = 0.0;
    double soc_max = 0.0;
    double soc_init = 0.0;
    StorageCost cost;
    // Extra affine restrictions extra_matrix * x <= extra_rhs on the stacked
    // variables. Zero rows when unused.
    Matrix extra_matrix;
    Vector extra_rhs;

    /// Throws ValidationError; `path` prefixes the reported field names.
    void validate(Index n_buses, Index horizon, const std::string& path = "unit") const;
};

struct StorageSchedule {
    Vector d_plus;
    Vector d_minus;

    static StorageSchedule zero(Index horizon);
    static StorageSchedule from_stacked(const Vector& x);

    Index horizon() const { return d_plus.size(); }
    Vector net() const { return d_plus - d_minus; }
    Vector stacked() const;
};

struct PriceSchedule {
    Vector tau;
    double bound = 0.0;  // M

    void validate(const std::string& path = "prices") const;
};

double storage_cost(const StorageUnit& unit, const StorageSchedule& schedule);

/// Gradient of storage_cost with respect to the stacked variables.
Vector storage_cost_gradient(const StorageUnit& unit, const StorageSchedule& schedule);

/// Block Hessian of the cost over the stacked variables.
Matrix storage_cost_hessian(const StorageUnit& unit, Index horizon);

/// SoC after each period.
Vector soc_trajectory(const StorageUnit& unit, const StorageSchedule& schedule);

/// Sum_t tau_t (d+_t - d-_t) - c(d). No feasibility requirement.
double su_profit(const StorageUnit& unit, const StorageSchedule& schedule, const PriceSchedule& prices);

/// Linear description of the unit's feasible set on the stacked variables:
/// one energy-neutrality equality and the SoC, rate, sign and extra rows.
struct StorageConstraints {
    Matrix eq_matrix;
    Vector eq_rhs;
    Matrix ineq_matrix;
    Vector ineq_rhs;
};

StorageConstraints storage_constraints(const StorageUnit& unit, Index horizon);

/// Block-diagonal constraints for several units, variables stacked unit by
/// unit.
StorageConstraints stacked_constraints(const std::vector<StorageUnit>& units, Index horizon);

/// Block-diagonal cost Hessian matching stacked_constraints.
Matrix stacked_cost_hessian(const std::vector<StorageUnit>& units, Index horizon);

/// Splits unit-by-unit stacked variables into schedules, and back.
std::vector<StorageSchedule> split_schedules(const Vector& x, std::size_t units, Index horizon);
Vector stack_schedules(const std::vector<StorageSchedule>& schedules);

/// Profit-maximizing feasible schedule. Unique since the cost is strictly
/// convex.
StorageSchedule su_best_response(const StorageUnit& unit, const PriceSchedule& prices,
                                 const solver::SolverSettings& settings = {});

struct Violation {
    std::string constraint;  // e.g. "charge limit"
    Index period = -1;       // row index for extra constraints, -1 for horizon-wide ones
    double residual = 0.0;
};

/// Every violated constraint with its residual, empty iff feasible.
std::vector<Violation> feasibility_check(const StorageUnit& unit, const StorageSchedule& schedule,
                                         double tolerance = 1e-9);

}  // namespace esagg
