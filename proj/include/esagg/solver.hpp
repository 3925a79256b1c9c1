#pragma once

// Dense solver for small smooth convex programs
//
//     minimize    f(x)
//     subject to  A x  = b
//                 G x <= h
//
// Quadratic objectives go through a primal active-set method that tolerates
// positive semi-definite (including zero) Hessians. General smooth objectives
// go through projected gradient, with each projection solved as a QP by the
// same active-set code.
//
// Multiplier convention: the Lagrangian is
//     L(x, nu, mu) = f(x) + nu^T (A x - b) + mu^T (G x - h),   mu >= 0,
// so stationarity reads grad f + A^T nu + G^T mu = 0 and the sensitivity of the
// optimal value to b is -nu.

#include <Eigen/Dense>

#include <functional>
#include <variant>
#include <vector>

#include "esagg/errors.hpp"

namespace esagg::solver {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class StepControl { exact_line_search, backtracking };

struct SolverSettings {
    double kkt_tolerance = 1e-8;
    int max_iterations = 10'000;
    StepControl step_control = StepControl::backtracking;

    void validate() const;
};

/// f(x) = 1/2 x^T hessian x + linear^T x + constant, hessian symmetric PSD.
struct QuadraticObjective {
    Matrix hessian;
    Vector linear;
    double constant = 0.0;
};

/// Differentiable convex objective given by value and gradient oracles.
struct SmoothObjective {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
};

struct ConvexProgram {
    Index dimension = 0;
    std::variant<QuadraticObjective, SmoothObjective> objective;
    Matrix eq_matrix;
    Vector eq_rhs;
    Matrix ineq_matrix;
    Vector ineq_rhs;
    // Optional, one entry per inequality. When several multiplier vectors
    // satisfy the KKT conditions, multipliers of higher tiers are driven to
    // minimum norm first, then lower tiers. Empty means all tier 0.
    std::vector<int> dual_tier;

    /// Quadratic program with no constraints yet; callers append rows.
    static ConvexProgram quadratic(Matrix hessian, Vector linear);

    double value(const Vector& x) const;
    Vector gradient(const Vector& x) const;
    bool is_quadratic() const { return std::holds_alternative<QuadraticObjective>(objective); }

    Index eq_count() const { return eq_matrix.rows(); }
    Index ineq_count() const { return ineq_matrix.rows(); }

    /// Throws DimensionMismatch on inconsistent shapes.
    void validate() const;
};

struct Solution {
    Vector point;
    Vector eq_duals;
    Vector ineq_duals;
    double objective_value = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
};

/// KKT residuals recomputed from a candidate primal/dual point, with no
/// access to solver internals.
struct KktReport {
    double primal_equality = 0.0;    // max |A x - b|
    double primal_inequality = 0.0;  // max (G x - h)_+
    double stationarity = 0.0;       // max |grad f + A^T nu + G^T mu|
    double complementarity = 0.0;    // max |mu_i (h_i - G_i x)|
    double dual_sign = 0.0;          // max (-mu_i)_+

    double max() const;
};

KktReport kkt_report(const ConvexProgram& program, const Vector& point, const Vector& eq_duals,
                     const Vector& ineq_duals);

class SolverError : public Error {
public:
    using Error::Error;
};

class Infeasible : public SolverError {
public:
    using SolverError::SolverError;
};

class Unbounded : public SolverError {
public:
    using SolverError::SolverError;
};

class MaxIterations : public SolverError {
public:
    MaxIterations(const std::string& what, Solution best)
        : SolverError(what), best_(std::move(best)) {}

    /// Last iterate with its duals and residual.
    const Solution& best() const noexcept { return best_; }

private:
    Solution best_;
};

/// Largest relative deviation between the objective's gradient oracle and a
/// central finite difference with step `h`, measured at `point`.
double gradient_check(const ConvexProgram& program, const Vector& point, double h = 1e-6);

/// Solves the program to the KKT tolerance in `settings`. Throws Infeasible,
/// Unbounded or MaxIterations.
Solution solve(const ConvexProgram& program, const SolverSettings& settings = {});

/// Same, starting from a point the caller knows to be feasible.
Solution solve(const ConvexProgram& program, const Vector& feasible_start,
               const SolverSettings& settings = {});

}  // namespace esagg::solver
