#include "active_set.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace esagg::solver::detail {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Indices of a maximal linearly independent subset of the rows of `m`, in
// ascending order.
std::vector<Index> independent_rows(const Matrix& m) {
    std::vector<Index> rows;
    if (m.rows() == 0) return rows;
    Eigen::ColPivHouseholderQR<Matrix> qr(m.transpose());
    qr.setThreshold(1e-10);
    const Index rank = qr.rank();
    for (Index k = 0; k < rank; ++k) rows.push_back(qr.colsPermutation().indices()(k));
    std::sort(rows.begin(), rows.end());
    return rows;
}

bool has_full_row_rank(const Matrix& m) {
    if (m.rows() == 0) return true;
    if (m.rows() > m.cols()) return false;
    Eigen::ColPivHouseholderQR<Matrix> qr(m.transpose());
    qr.setThreshold(1e-10);
    return qr.rank() == m.rows();
}

struct CoreProblem {
    const Matrix& hessian;
    const Vector& linear;
    Matrix eq;         // independent equality rows only
    const Matrix& ineq;
    const Vector& ineq_rhs;
};

struct CoreResult {
    Vector x;
    Vector eq_mult;    // for the rows of CoreProblem::eq
    Vector ineq_mult;  // full length, zero off the working set
    int iterations = 0;
};

double activity_tolerance(const Matrix& ineq, const Vector& rhs, Index i, double xscale) {
    return 1e-11 * std::max({1.0, std::abs(rhs(i)), ineq.row(i).cwiseAbs().sum() * xscale});
}

// Primal active-set iterations from a feasible point.
CoreResult run_core(const CoreProblem& p, Vector x, int max_iterations) {
    const Index n = x.size();
    const Index me = p.eq.rows();
    const Index mi = p.ineq.rows();

    std::vector<Index> working;
    std::vector<char> in_working(static_cast<std::size_t>(mi), 0);

    auto working_matrix = [&]() {
        Matrix aw(me + static_cast<Index>(working.size()), n);
        if (me > 0) aw.topRows(me) = p.eq;
        for (std::size_t k = 0; k < working.size(); ++k) aw.row(me + static_cast<Index>(k)) = p.ineq.row(working[k]);
        return aw;
    };

    {
        const double xscale = std::max(1.0, inf_norm(x));
        Matrix aw = p.eq;
        for (Index i = 0; i < mi; ++i) {
            const double slack = p.ineq_rhs(i) - p.ineq.row(i).dot(x);
            if (slack > activity_tolerance(p.ineq, p.ineq_rhs, i, xscale)) continue;
            if (aw.rows() >= n) break;
            Matrix trial(aw.rows() + 1, n);
            trial.topRows(aw.rows()) = aw;
            trial.row(aw.rows()) = p.ineq.row(i);
            if (has_full_row_rank(trial)) {
                aw = std::move(trial);
                working.push_back(i);
                in_working[static_cast<std::size_t>(i)] = 1;
            }
        }
    }

    CoreResult out;
    for (int iter = 0; iter < max_iterations; ++iter) {
        out.iterations = iter + 1;
        const Vector g = p.hessian * x + p.linear;
        const double gscale = std::max(1.0, inf_norm(g));
        const double xscale = std::max(1.0, inf_norm(x));
        const Matrix aw = working_matrix();
        const Index mw = aw.rows();

        Matrix z;
        Eigen::HouseholderQR<Matrix> qr;
        if (mw == 0) {
            z = Matrix::Identity(n, n);
        } else {
            qr.compute(aw.transpose());
            const Matrix qfull = qr.householderQ() * Matrix::Identity(n, n);
            z = qfull.rightCols(n - mw);
        }

        Vector step = Vector::Zero(n);
        bool ray = false;
        if (z.cols() > 0) {
            const Matrix reduced_hessian = z.transpose() * p.hessian * z;
            const Vector reduced_grad = z.transpose() * g;
            Eigen::SelfAdjointEigenSolver<Matrix> es(reduced_hessian);
            const Vector& ev = es.eigenvalues();
            const Matrix& vecs = es.eigenvectors();
            const double hscale = std::max(1.0, ev.cwiseAbs().maxCoeff());
            const Vector coords = vecs.transpose() * reduced_grad;
            const double grad_tol = 1e-12 * gscale;

            Vector flat_part = Vector::Zero(z.cols());
            Vector newton_part = Vector::Zero(z.cols());
            for (Index k = 0; k < ev.size(); ++k) {
                if (ev(k) <= 1e-11 * hscale) {
                    if (std::abs(coords(k)) > grad_tol) flat_part -= coords(k) * vecs.col(k);
                } else {
                    newton_part -= (coords(k) / ev(k)) * vecs.col(k);
                }
            }
            if (flat_part.size() > 0 && inf_norm(flat_part) > 0.0) {
                step = z * flat_part;
                ray = true;
            } else {
                step = z * newton_part;
            }
        }

        if (inf_norm(step) <= 1e-13 * xscale) {
            Vector mult = Vector::Zero(mw);
            if (mw > 0) mult = qr.solve(-g);
            Index drop = -1;
            double most_negative = -1e-11 * gscale;
            for (std::size_t k = 0; k < working.size(); ++k) {
                const double mu = mult(me + static_cast<Index>(k));
                if (mu < most_negative) {
                    most_negative = mu;
                    drop = static_cast<Index>(k);
                }
            }
            if (drop < 0) {
                out.x = std::move(x);
                out.eq_mult = mult.head(me);
                out.ineq_mult = Vector::Zero(mi);
                for (std::size_t k = 0; k < working.size(); ++k) {
                    out.ineq_mult(working[k]) = std::max(0.0, mult(me + static_cast<Index>(k)));
                }
                return out;
            }
            in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(drop)])] = 0;
            working.erase(working.begin() + drop);
            continue;
        }

        double alpha = ray ? kInf : 1.0;
        Index blocking = -1;
        const double step_norm = inf_norm(step);
        for (Index i = 0; i < mi; ++i) {
            if (in_working[static_cast<std::size_t>(i)]) continue;
            const double gp = p.ineq.row(i).dot(step);
            if (gp <= 1e-12 * p.ineq.row(i).cwiseAbs().maxCoeff() * step_norm) continue;
            const double slack = std::max(0.0, p.ineq_rhs(i) - p.ineq.row(i).dot(x));
            const double a = slack / gp;
            if (a < alpha) {
                alpha = a;
                blocking = i;
            }
        }
        if (!std::isfinite(alpha)) {
            throw Unbounded("objective decreases without bound along a feasible ray");
        }
        x += alpha * step;
        if (blocking >= 0) {
            working.push_back(blocking);
            in_working[static_cast<std::size_t>(blocking)] = 1;
        }
    }

    Solution best;
    best.point = x;
    throw MaxIterations("active-set iteration limit reached", best);
}

// Tiered minimum-norm multiplier among all multipliers that satisfy the KKT
// conditions at x. `eq_mult` and `ineq_mult` hold one valid multiplier.
void minimum_norm_multipliers(const QpInput& in, const Vector& x, Vector& eq_mult, Vector& ineq_mult,
                              int max_iterations) {
    const Index n = x.size();
    const Index me = in.eq_matrix.rows();
    const Index mi = in.ineq_matrix.rows();
    const double xscale = std::max(1.0, inf_norm(x));

    std::vector<Index> active;
    for (Index i = 0; i < mi; ++i) {
        const double slack = in.ineq_rhs(i) - in.ineq_matrix.row(i).dot(x);
        if (slack <= activity_tolerance(in.ineq_matrix, in.ineq_rhs, i, xscale) || ineq_mult(i) > 0.0) {
            active.push_back(i);
        }
    }
    const Index na = static_cast<Index>(active.size());
    const Index m = me + na;
    if (m == 0) return;

    Matrix rows(m, n);
    if (me > 0) rows.topRows(me) = in.eq_matrix;
    for (Index k = 0; k < na; ++k) rows.row(me + k) = in.ineq_matrix.row(active[static_cast<std::size_t>(k)]);
    if (has_full_row_rank(rows)) return;  // multipliers are unique

    // Variables w = (nu, mu_active); constraints rows^T w = -grad, mu >= 0.
    const Vector grad = in.hessian * x + in.linear;
    Vector w(m);
    w.head(me) = eq_mult;
    for (Index k = 0; k < na; ++k) w(me + k) = ineq_mult(active[static_cast<std::size_t>(k)]);

    std::vector<int> tier_of(static_cast<std::size_t>(m), 0);
    for (Index k = 0; k < na; ++k) {
        const auto i = static_cast<std::size_t>(active[static_cast<std::size_t>(k)]);
        tier_of[static_cast<std::size_t>(me + k)] = in.dual_tier.empty() ? 0 : in.dual_tier[i];
    }
    std::vector<int> tiers(tier_of.begin(), tier_of.end());
    std::sort(tiers.begin(), tiers.end());
    tiers.erase(std::unique(tiers.begin(), tiers.end()), tiers.end());

    Matrix eq = rows.transpose();
    Vector eq_rhs = -grad;
    Matrix sign(na, m);
    sign.setZero();
    for (Index k = 0; k < na; ++k) sign(k, me + k) = -1.0;
    const Vector sign_rhs = Vector::Zero(na);
    const Vector zero_linear = Vector::Zero(m);
    const std::vector<int> no_tiers;

    for (auto it = tiers.rbegin(); it != tiers.rend(); ++it) {
        const bool last = std::next(it) == tiers.rend();
        Matrix weight = Matrix::Zero(m, m);
        for (Index k = 0; k < m; ++k) {
            if (tier_of[static_cast<std::size_t>(k)] == *it || (last && tier_of[static_cast<std::size_t>(k)] <= *it)) {
                weight(k, k) = 1.0;
            }
        }
        const QpInput sub{weight, zero_linear, eq, eq_rhs, sign, sign_rhs, no_tiers};
        QpResult r = solve_qp(sub, w, max_iterations, false);
        w = r.x;
        if (!last) {
            // Freeze this tier before minimizing the next one.
            Index frozen = 0;
            for (Index k = 0; k < m; ++k) frozen += weight(k, k) > 0.0 ? 1 : 0;
            Matrix grown(eq.rows() + frozen, m);
            Vector grown_rhs(eq.rows() + frozen);
            grown.topRows(eq.rows()) = eq;
            grown_rhs.head(eq.rows()) = eq_rhs;
            Index r_i = eq.rows();
            for (Index k = 0; k < m; ++k) {
                if (weight(k, k) > 0.0) {
                    grown.row(r_i).setZero();
                    grown(r_i, k) = 1.0;
                    grown_rhs(r_i) = w(k);
                    ++r_i;
                }
            }
            eq = std::move(grown);
            eq_rhs = std::move(grown_rhs);
        }
    }

    eq_mult = w.head(me);
    ineq_mult.setZero();
    for (Index k = 0; k < na; ++k) ineq_mult(active[static_cast<std::size_t>(k)]) = std::max(0.0, w(me + k));
}

}  // namespace

QpResult solve_qp(const QpInput& in, const std::optional<Vector>& start, int max_iterations,
                  bool min_norm_duals) {
    const Index n = in.linear.size();
    const Index me = in.eq_matrix.rows();
    const Index mi = in.ineq_matrix.rows();

    const std::vector<Index> eq_rows = independent_rows(in.eq_matrix);
    Matrix eq(static_cast<Index>(eq_rows.size()), n);
    Vector eq_rhs(static_cast<Index>(eq_rows.size()));
    for (std::size_t k = 0; k < eq_rows.size(); ++k) {
        eq.row(static_cast<Index>(k)) = in.eq_matrix.row(eq_rows[k]);
        eq_rhs(static_cast<Index>(k)) = in.eq_rhs(eq_rows[k]);
    }

    const double feas_tol =
        1e-9 * std::max({1.0, inf_norm(in.eq_rhs), inf_norm(in.ineq_rhs)});

    int used_iterations = 0;
    Vector x;
    if (start) {
        x = *start;
    } else {
        if (me > 0) {
            x = in.eq_matrix.completeOrthogonalDecomposition().solve(in.eq_rhs);
            if (inf_norm(in.eq_matrix * x - in.eq_rhs) > feas_tol) {
                throw Infeasible("equality constraints are inconsistent");
            }
        } else {
            x = Vector::Zero(n);
        }
        const double violation = mi > 0 ? (in.ineq_matrix * x - in.ineq_rhs).maxCoeff() : 0.0;
        if (violation > 0.0) {
            // Phase 1: min t  s.t.  A x = b,  G x - t <= h,  -t <= 0.
            Matrix hess1 = Matrix::Zero(n + 1, n + 1);
            Vector lin1 = Vector::Zero(n + 1);
            lin1(n) = 1.0;
            Matrix eq1(eq.rows(), n + 1);
            eq1.leftCols(n) = eq;
            eq1.col(n).setZero();
            Matrix ineq1(mi + 1, n + 1);
            ineq1.topLeftCorner(mi, n) = in.ineq_matrix;
            ineq1.block(0, n, mi, 1).setConstant(-1.0);
            ineq1.row(mi).setZero();
            ineq1(mi, n) = -1.0;
            Vector rhs1(mi + 1);
            rhs1.head(mi) = in.ineq_rhs;
            rhs1(mi) = 0.0;
            Vector x1(n + 1);
            x1.head(n) = x;
            x1(n) = violation;
            const CoreProblem phase1{hess1, lin1, eq1, ineq1, rhs1};
            CoreResult r1 = run_core(phase1, x1, max_iterations);
            used_iterations += r1.iterations;
            if (r1.x(n) > feas_tol) throw Infeasible("no point satisfies the constraints");
            x = r1.x.head(n);
        }
    }

    const CoreProblem phase2{in.hessian, in.linear, eq, in.ineq_matrix, in.ineq_rhs};
    CoreResult r = run_core(phase2, x, std::max(1, max_iterations - used_iterations));

    QpResult out;
    out.x = std::move(r.x);
    out.iterations = used_iterations + r.iterations;
    out.eq_duals = Vector::Zero(me);
    for (std::size_t k = 0; k < eq_rows.size(); ++k) out.eq_duals(eq_rows[k]) = r.eq_mult(static_cast<Index>(k));
    out.ineq_duals = std::move(r.ineq_mult);
    if (min_norm_duals) {
        minimum_norm_multipliers(in, out.x, out.eq_duals, out.ineq_duals, max_iterations);
    }
    return out;
}

}  // namespace esagg::solver::detail
