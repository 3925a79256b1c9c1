#include "esagg/storage.hpp"

#include <cmath>

namespace esagg {

void StorageUnit::validate(Index n_buses, Index horizon, const std::string& path) const {
    auto fail = [&](const char* field, const std::string& what) { throw ValidationError(path + "." + field, what); };
    if (bus < 0 || bus >= n_buses) fail("bus", "must index an existing bus");
    if (!(eta_plus > 0.0 && eta_plus <= 1.0)) fail("eta_plus", "must lie in (0, 1]");
    if (!(eta_minus > 0.0 && eta_minus <= 1.0)) fail("eta_minus", "must lie in (0, 1]");
    if (!(d_plus_max >= 0.0)) fail("d_plus_max", "must be nonnegative");
    if (!(d_minus_max >= 0.0)) fail("d_minus_max", "must be nonnegative");
    if (!(soc_min <= soc_init && soc_init <= soc_max)) fail("soc_init", "must lie in [soc_min, soc_max]");
    if (!(cost.w_plus > 0.0)) fail("cost.w_plus", "must be positive");
    if (!(cost.w_minus > 0.0)) fail("cost.w_minus", "must be positive");
    if (!(cost.w_plus * cost.w_minus > cost.w_cross * cost.w_cross)) {
        fail("cost.w_cross", "cost must be positive definite (w_cross^2 < w_plus * w_minus)");
    }
    if (extra_matrix.rows() != extra_rhs.size()) fail("extra_constraints", "matrix and rhs lengths differ");
    if (extra_matrix.rows() > 0 && extra_matrix.cols() != 2 * horizon) {
        fail("extra_constraints.matrix", "needs 2 * horizon columns");
    }
    if (!extra_matrix.allFinite() || !extra_rhs.allFinite()) fail("extra_constraints", "entries must be finite");
}

StorageSchedule StorageSchedule::zero(Index horizon) {
    return {Vector::Zero(horizon), Vector::Zero(horizon)};
}

StorageSchedule StorageSchedule::from_stacked(const Vector& x) {
    const Index t = x.size() / 2;
    return {x.head(t), x.tail(t)};
}

Vector StorageSchedule::stacked() const {
    Vector x(2 * horizon());
    x << d_plus, d_minus;
    return x;
}

void PriceSchedule::validate(const std::string& path) const {
    if (!(bound > 0.0)) throw ValidationError(path + ".bound", "must be positive");
    for (Index t = 0; t < tau.size(); ++t) {
        if (!(tau(t) >= 0.0 && tau(t) <= bound)) {
            throw ValidationError(path + ".tau[" + std::to_string(t) + "]", "must lie in [0, M]");
        }
    }
}

Matrix storage_cost_hessian(const StorageUnit& unit, Index horizon) {
    const Matrix eye = Matrix::Identity(horizon, horizon);
    Matrix h(2 * horizon, 2 * horizon);
    h << unit.cost.w_plus * eye, unit.cost.w_cross * eye, unit.cost.w_cross * eye, unit.cost.w_minus * eye;
    return h;
}

double storage_cost(const StorageUnit& unit, const StorageSchedule& s) {
    const auto& c = unit.cost;
    return 0.5 * (c.w_plus * s.d_plus.squaredNorm() + c.w_minus * s.d_minus.squaredNorm() +
                  2.0 * c.w_cross * s.d_plus.dot(s.d_minus));
}

Vector storage_cost_gradient(const StorageUnit& unit, const StorageSchedule& s) {
    const auto& c = unit.cost;
    Vector g(2 * s.horizon());
    g << c.w_plus * s.d_plus + c.w_cross * s.d_minus, c.w_minus * s.d_minus + c.w_cross * s.d_plus;
    return g;
}

Vector soc_trajectory(const StorageUnit& unit, const StorageSchedule& s) {
    Vector soc(s.horizon());
    double level = unit.soc_init;
    for (Index t = 0; t < s.horizon(); ++t) {
        level += unit.eta_minus * s.d_minus(t) - s.d_plus(t) / unit.eta_plus;
        soc(t) = level;
    }
    return soc;
}

double su_profit(const StorageUnit& unit, const StorageSchedule& schedule, const PriceSchedule& prices) {
    if (prices.tau.size() != schedule.horizon() || schedule.d_minus.size() != schedule.horizon()) {
        throw DimensionMismatch("price and schedule horizons differ");
    }
    return prices.tau.dot(schedule.net()) - storage_cost(unit, schedule);
}

StorageConstraints storage_constraints(const StorageUnit& unit, Index horizon) {
    const Index n = 2 * horizon;
    StorageConstraints c;
    c.eq_matrix = Matrix::Zero(1, n);
    c.eq_matrix.leftCols(horizon).setConstant(-1.0 / unit.eta_plus);
    c.eq_matrix.rightCols(horizon).setConstant(unit.eta_minus);
    c.eq_rhs = Vector::Zero(1);

    const Index rows = 4 * horizon + 2 * horizon + unit.extra_matrix.rows();
    c.ineq_matrix = Matrix::Zero(rows, n);
    c.ineq_rhs = Vector::Zero(rows);
    Index r = 0;
    // SoC after period t: soc_init + sum_{k<=t} (eta- d-_k - d+_k / eta+).
    for (Index t = 0; t < horizon; ++t, r += 2) {
        for (Index k = 0; k <= t; ++k) {
            c.ineq_matrix(r, k) = -1.0 / unit.eta_plus;
            c.ineq_matrix(r, horizon + k) = unit.eta_minus;
        }
        c.ineq_rhs(r) = unit.soc_max - unit.soc_init;
        c.ineq_matrix.row(r + 1) = -c.ineq_matrix.row(r);
        c.ineq_rhs(r + 1) = unit.soc_init - unit.soc_min;
    }
    for (Index j = 0; j < n; ++j, r += 2) {
        c.ineq_matrix(r, j) = 1.0;
        c.ineq_rhs(r) = j < horizon ? unit.d_plus_max : unit.d_minus_max;
        c.ineq_matrix(r + 1, j) = -1.0;
    }
    if (unit.extra_matrix.rows() > 0) {
        c.ineq_matrix.bottomRows(unit.extra_matrix.rows()) = unit.extra_matrix;
        c.ineq_rhs.tail(unit.extra_rhs.size()) = unit.extra_rhs;
    }
    return c;
}

StorageConstraints stacked_constraints(const std::vector<StorageUnit>& units, Index horizon) {
    std::vector<StorageConstraints> parts;
    Index eq_rows = 0, ineq_rows = 0;
    for (const auto& u : units) {
        parts.push_back(storage_constraints(u, horizon));
        eq_rows += parts.back().eq_matrix.rows();
        ineq_rows += parts.back().ineq_matrix.rows();
    }
    const Index n = 2 * horizon * static_cast<Index>(units.size());
    StorageConstraints c{Matrix::Zero(eq_rows, n), Vector::Zero(eq_rows), Matrix::Zero(ineq_rows, n),
                         Vector::Zero(ineq_rows)};
    Index re = 0, ri = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Index col = 2 * horizon * static_cast<Index>(k);
        const auto& p = parts[k];
        c.eq_matrix.block(re, col, p.eq_matrix.rows(), 2 * horizon) = p.eq_matrix;
        c.eq_rhs.segment(re, p.eq_rhs.size()) = p.eq_rhs;
        c.ineq_matrix.block(ri, col, p.ineq_matrix.rows(), 2 * horizon) = p.ineq_matrix;
        c.ineq_rhs.segment(ri, p.ineq_rhs.size()) = p.ineq_rhs;
        re += p.eq_matrix.rows();
        ri += p.ineq_matrix.rows();
    }
    return c;
}

Matrix stacked_cost_hessian(const std::vector<StorageUnit>& units, Index horizon) {
    const Index block = 2 * horizon;
    const Index n = block * static_cast<Index>(units.size());
    Matrix h = Matrix::Zero(n, n);
    for (std::size_t k = 0; k < units.size(); ++k) {
        const Index at = block * static_cast<Index>(k);
        h.block(at, at, block, block) = storage_cost_hessian(units[k], horizon);
    }
    return h;
}

std::vector<StorageSchedule> split_schedules(const Vector& x, std::size_t units, Index horizon) {
    if (x.size() != 2 * horizon * static_cast<Index>(units)) throw DimensionMismatch("stacked length mismatch");
    std::vector<StorageSchedule> out;
    for (std::size_t k = 0; k < units; ++k) {
        out.push_back(StorageSchedule::from_stacked(x.segment(2 * horizon * static_cast<Index>(k), 2 * horizon)));
    }
    return out;
}

Vector stack_schedules(const std::vector<StorageSchedule>& schedules) {
    if (schedules.empty()) return Vector();
    const Index block = 2 * schedules.front().horizon();
    Vector x(block * static_cast<Index>(schedules.size()));
    for (std::size_t k = 0; k < schedules.size(); ++k) {
        x.segment(block * static_cast<Index>(k), block) = schedules[k].stacked();
    }
    return x;
}

StorageSchedule su_best_response(const StorageUnit& unit, const PriceSchedule& prices,
                                 const solver::SolverSettings& settings) {
    const Index horizon = prices.tau.size();
    Vector linear(2 * horizon);
    linear << -prices.tau, prices.tau;
    auto program = solver::ConvexProgram::quadratic(storage_cost_hessian(unit, horizon), linear);
    StorageConstraints c = storage_constraints(unit, horizon);
    program.eq_matrix = std::move(c.eq_matrix);
    program.eq_rhs = std::move(c.eq_rhs);
    program.ineq_matrix = std::move(c.ineq_matrix);
    program.ineq_rhs = std::move(c.ineq_rhs);
    return StorageSchedule::from_stacked(solver::solve(program, settings).point);
}

std::vector<Violation> feasibility_check(const StorageUnit& unit, const StorageSchedule& s, double tolerance) {
    std::vector<Violation> out;
    auto flag = [&](const char* name, Index t, double excess) {
        if (excess > tolerance) out.push_back({name, t, excess});
    };
    const Index horizon = s.horizon();
    if (s.d_minus.size() != horizon) throw DimensionMismatch("d_plus and d_minus lengths differ");
    for (Index t = 0; t < horizon; ++t) {
        flag("discharge nonnegativity", t, -s.d_plus(t));
        flag("charge nonnegativity", t, -s.d_minus(t));
        flag("discharge limit", t, s.d_plus(t) - unit.d_plus_max);
        flag("charge limit", t, s.d_minus(t) - unit.d_minus_max);
    }
    const Vector soc = soc_trajectory(unit, s);
    for (Index t = 0; t < horizon; ++t) {
        flag("soc upper limit", t, soc(t) - unit.soc_max);
        flag("soc lower limit", t, unit.soc_min - soc(t));
    }
    const double neutrality = (unit.eta_minus * s.d_minus - s.d_plus / unit.eta_plus).sum();
    flag("energy neutrality", -1, std::abs(neutrality));
    if (unit.extra_matrix.rows() > 0) {
        const Vector excess = unit.extra_matrix * s.stacked() - unit.extra_rhs;
        for (Index k = 0; k < excess.size(); ++k) flag("extra constraint", k, excess(k));
    }
    return out;
}

}  // namespace esagg
