#include <algorithm>
#include <cmath>
#include <optional>

#include "active_set.hpp"
#include "esagg/solver.hpp"

namespace esagg::solver {
namespace {

Solution finish(const ConvexProgram& program, detail::QpResult r) {
    Solution s;
    s.point = std::move(r.x);
    s.eq_duals = std::move(r.eq_duals);
    s.ineq_duals = std::move(r.ineq_duals);
    s.iterations = r.iterations;
    s.objective_value = program.value(s.point);
    s.kkt_residual = kkt_report(program, s.point, s.eq_duals, s.ineq_duals).max();
    return s;
}

Solution solve_quadratic(const ConvexProgram& program, const std::optional<Vector>& start,
                         const SolverSettings& settings) {
    const auto& q = std::get<QuadraticObjective>(program.objective);
    const detail::QpInput in{q.hessian,         q.linear,           program.eq_matrix, program.eq_rhs,
                             program.ineq_matrix, program.ineq_rhs, program.dual_tier};
    Solution s = finish(program, detail::solve_qp(in, start, settings.max_iterations, true));
    if (s.kkt_residual > settings.kkt_tolerance) {
        throw MaxIterations("active-set solution misses the KKT tolerance", s);
    }
    return s;
}

// Euclidean projection onto the feasible polyhedron, with the projection
// multipliers. Warm-started from a feasible point when one is known.
struct Projector {
    const ConvexProgram& program;
    int max_iterations;
    Matrix identity;
    std::vector<int> no_tiers;

    Projector(const ConvexProgram& p, int iters)
        : program(p), max_iterations(iters), identity(Matrix::Identity(p.dimension, p.dimension)) {}

    detail::QpResult operator()(const Vector& target, const std::optional<Vector>& start) const {
        const Vector linear = -target;
        const detail::QpInput in{identity,          linear,           program.eq_matrix, program.eq_rhs,
                                 program.ineq_matrix, program.ineq_rhs, no_tiers};
        return detail::solve_qp(in, start, max_iterations, false);
    }
};

double golden_section(const std::function<double(double)>& phi, double lo, double hi) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = phi(c), fd = phi(d);
    for (int k = 0; k < 80 && b - a > 1e-14; ++k) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = phi(d);
        }
    }
    return fc <= fd ? c : d;
}

Solution solve_smooth(const ConvexProgram& program, const std::optional<Vector>& start,
                      const SolverSettings& settings) {
    const Projector project(program, settings.max_iterations);
    Vector x = start ? *start : project(Vector::Zero(program.dimension), std::nullopt).x;
    double fx = program.value(x);
    Vector gx = program.gradient(x);
    double step = 1.0;

    Solution current;
    for (int iter = 0; iter < settings.max_iterations; ++iter) {
        // Unit-step projection: its multipliers certify stationarity.
        detail::QpResult unit = project(x - gx, x);
        current.point = unit.x;
        current.eq_duals = unit.eq_duals;
        current.ineq_duals = unit.ineq_duals;
        current.iterations = iter;
        current.objective_value = program.value(current.point);
        current.kkt_residual =
            kkt_report(program, current.point, current.eq_duals, current.ineq_duals).max();
        if (current.kkt_residual <= settings.kkt_tolerance) return current;

        Vector next;
        if (settings.step_control == StepControl::backtracking) {
            double s = step;
            for (int k = 0; k < 60; ++k, s *= 0.5) {
                next = project(x - s * gx, x).x;
                if (program.value(next) <= fx + 1e-4 * gx.dot(next - x)) break;
            }
        } else {
            const Vector direction = project(x - step * gx, x).x - x;
            const double alpha =
                golden_section([&](double a) { return program.value(x + a * direction); }, 0.0, 1.0);
            next = x + alpha * direction;
        }

        const Vector gnext = program.gradient(next);
        const Vector dx = next - x;
        const Vector dg = gnext - gx;
        const double curvature = dx.dot(dg);
        step = curvature > 0.0 ? std::clamp(dx.squaredNorm() / curvature, 1e-10, 1e10) : 1.0;

        x = next;
        fx = program.value(x);
        gx = gnext;
    }
    throw MaxIterations("projected gradient iteration limit reached", current);
}

}  // namespace

Solution solve(const ConvexProgram& program, const SolverSettings& settings) {
    settings.validate();
    program.validate();
    return program.is_quadratic() ? solve_quadratic(program, std::nullopt, settings)
                                  : solve_smooth(program, std::nullopt, settings);
}

Solution solve(const ConvexProgram& program, const Vector& feasible_start, const SolverSettings& settings) {
    settings.validate();
    program.validate();
    if (feasible_start.size() != program.dimension) throw DimensionMismatch("start point has wrong size");
    return program.is_quadratic() ? solve_quadratic(program, feasible_start, settings)
                                  : solve_smooth(program, feasible_start, settings);
}

}  // namespace esagg::solver
