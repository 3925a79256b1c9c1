#pragma once

#include <optional>
#include <vector>

#include "esagg/solver.hpp"

namespace esagg::solver::detail {

struct QpResult {
    Vector x;
    Vector eq_duals;
    Vector ineq_duals;
    int iterations = 0;
};

struct QpInput {
    const Matrix& hessian;
    const Vector& linear;
    const Matrix& eq_matrix;
    const Vector& eq_rhs;
    const Matrix& ineq_matrix;
    const Vector& ineq_rhs;
    const std::vector<int>& dual_tier;
};

/// Primal active-set method for min 1/2 x'Qx + c'x, Q PSD. When `start` is
/// given it must be feasible; otherwise a phase-1 LP finds a feasible point.
/// With `min_norm_duals` the returned multipliers are the (tiered) minimum-norm
/// element of the optimal multiplier set.
QpResult solve_qp(const QpInput& in, const std::optional<Vector>& start, int max_iterations,
                  bool min_norm_duals);

}  // namespace esagg::solver::detail
