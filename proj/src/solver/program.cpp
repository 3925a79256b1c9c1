#include <algorithm>
#include <cmath>

#include "esagg/solver.hpp"

namespace esagg::solver {

void SolverSettings::validate() const {
    if (!(kkt_tolerance > 0.0)) throw ValidationError("kkt_tolerance", "must be positive");
    if (max_iterations < 1) throw ValidationError("max_iterations", "must be at least 1");
}

ConvexProgram ConvexProgram::quadratic(Matrix hessian, Vector linear) {
    ConvexProgram p;
    p.dimension = linear.size();
    p.objective = QuadraticObjective{std::move(hessian), std::move(linear), 0.0};
    p.eq_matrix.resize(0, p.dimension);
    p.eq_rhs.resize(0);
    p.ineq_matrix.resize(0, p.dimension);
    p.ineq_rhs.resize(0);
    return p;
}

double ConvexProgram::value(const Vector& x) const {
    if (const auto* q = std::get_if<QuadraticObjective>(&objective)) {
        return 0.5 * x.dot(q->hessian * x) + q->linear.dot(x) + q->constant;
    }
    return std::get<SmoothObjective>(objective).value(x);
}

Vector ConvexProgram::gradient(const Vector& x) const {
    if (const auto* q = std::get_if<QuadraticObjective>(&objective)) {
        return q->hessian * x + q->linear;
    }
    return std::get<SmoothObjective>(objective).gradient(x);
}

void ConvexProgram::validate() const {
    if (dimension <= 0) throw DimensionMismatch("program dimension must be positive");
    if (const auto* q = std::get_if<QuadraticObjective>(&objective)) {
        if (q->hessian.rows() != dimension || q->hessian.cols() != dimension ||
            q->linear.size() != dimension) {
            throw DimensionMismatch("quadratic objective does not match program dimension");
        }
    } else {
        const auto& s = std::get<SmoothObjective>(objective);
        if (!s.value || !s.gradient) throw DimensionMismatch("smooth objective needs value and gradient");
    }
    if (eq_matrix.cols() != dimension || eq_matrix.rows() != eq_rhs.size()) {
        throw DimensionMismatch("equality constraints do not match program dimension");
    }
    if (ineq_matrix.cols() != dimension || ineq_matrix.rows() != ineq_rhs.size()) {
        throw DimensionMismatch("inequality constraints do not match program dimension");
    }
    if (!dual_tier.empty() && static_cast<Index>(dual_tier.size()) != ineq_matrix.rows()) {
        throw DimensionMismatch("dual_tier must have one entry per inequality");
    }
}

double KktReport::max() const {
    return std::max({primal_equality, primal_inequality, stationarity, complementarity, dual_sign});
}

KktReport kkt_report(const ConvexProgram& program, const Vector& point, const Vector& eq_duals,
                     const Vector& ineq_duals) {
    KktReport r;
    Vector station = program.gradient(point);
    if (program.eq_count() > 0) {
        r.primal_equality = (program.eq_matrix * point - program.eq_rhs).cwiseAbs().maxCoeff();
        station += program.eq_matrix.transpose() * eq_duals;
    }
    if (program.ineq_count() > 0) {
        const Vector slack = program.ineq_rhs - program.ineq_matrix * point;
        r.primal_inequality = std::max(0.0, -slack.minCoeff());
        r.complementarity = ineq_duals.cwiseProduct(slack).cwiseAbs().maxCoeff();
        r.dual_sign = std::max(0.0, -ineq_duals.minCoeff());
        station += program.ineq_matrix.transpose() * ineq_duals;
    }
    r.stationarity = station.cwiseAbs().maxCoeff();
    return r;
}

double gradient_check(const ConvexProgram& program, const Vector& point, double h) {
    const Vector analytic = program.gradient(point);
    double worst = 0.0;
    Vector probe = point;
    for (Index i = 0; i < point.size(); ++i) {
        probe(i) = point(i) + h;
        const double up = program.value(probe);
        probe(i) = point(i) - h;
        const double down = program.value(probe);
        probe(i) = point(i);
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(numeric - analytic(i)) / std::max(1.0, std::abs(analytic(i))));
    }
    return worst;
}

}  // namespace esagg::solver
