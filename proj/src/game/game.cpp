#include "esagg/game.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>

#include "search.hpp"

namespace esagg {
namespace {

std::vector<PriceSchedule> split_prices(const Vector& z, Index units, Index horizon, double bound) {
    std::vector<PriceSchedule> prices;
    for (Index i = 0; i < units; ++i) prices.push_back({z.segment(i * horizon, horizon), bound});
    return prices;
}

Matrix zero_injection_lmps(const Network& network, const DemandProfile& demand, const solver::SolverSettings& s) {
    return clear_market(network, demand, NodalInjections::Zero(network.n_buses, network.horizon()), 0.0, s).lmps;
}

// Starting points: locational prices at zero injection, all zero, then
// seeded uniform draws.
std::vector<Vector> starting_points(const Matrix& lmps, const std::vector<Index>& buses, Index horizon, double bound,
                                    const SearchSettings& search) {
    const Index dim = static_cast<Index>(buses.size()) * horizon;
    std::vector<Vector> starts;
    Vector from_lmps(dim);
    for (std::size_t k = 0; k < buses.size(); ++k) {
        for (Index t = 0; t < horizon; ++t) {
            from_lmps(static_cast<Index>(k) * horizon + t) = std::clamp(lmps(buses[k], t), 0.0, bound);
        }
    }
    starts.push_back(from_lmps);
    if (search.multistart >= 2) starts.push_back(Vector::Zero(dim));
    std::mt19937 rng(search.seed);
    std::uniform_real_distribution<double> uniform(0.0, bound);
    while (static_cast<int>(starts.size()) < search.multistart) {
        Vector z(dim);
        for (Index k = 0; k < dim; ++k) z(k) = uniform(rng);
        starts.push_back(z);
    }
    return starts;
}

GameOutcome assemble(const Network& network, const DemandProfile& demand, const std::vector<StorageUnit>& units,
                     std::vector<PriceSchedule> prices, std::vector<StorageSchedule> schedules,
                     const detail::BoxSearchResult& found, const detail::EvaluationBudget& budget,
                     const SearchSettings& search, const std::function<std::vector<PriceSchedule>(const Vector&)>& expand) {
    GameOutcome out;
    const NodalInjections d = nodal_injections(network.n_buses, units, schedules);
    out.lmps_at_outcome = clear_market(network, demand, d, 0.0, search.solver).lmps;
    for (std::size_t i = 0; i < units.size(); ++i) {
        out.su_profits.push_back(su_profit(units[i], schedules[i], prices[i]));
    }
    out.agg_profit = agg_profit(network, demand, units, prices, schedules, search.solver);
    out.prices = std::move(prices);
    out.schedules = std::move(schedules);
    out.equilibrium = found.complete;
    out.status = found.complete ? "equilibrium" : "budget_exceeded";
    for (const Vector& z : found.ties) {
        if ((z - found.point).cwiseAbs().maxCoeff() > 1e3 * search.grid_resolution) out.alternatives.push_back(expand(z));
    }
    out.evaluations = budget.used();
    return out;
}

}  // namespace

void AggregatorConfig::validate(const std::vector<StorageUnit>& units, const std::string& path) const {
    if (!(price_bound > 0.0) || !std::isfinite(price_bound)) {
        throw ValidationError(path + ".price_bound", "must be positive and finite");
    }
    if (managed_units.empty()) throw ValidationError(path + ".managed_units", "must name at least one unit");
    std::set<std::string> seen;
    for (std::size_t k = 0; k < managed_units.size(); ++k) {
        const std::string field = path + ".managed_units[" + std::to_string(k) + "]";
        const auto& id = managed_units[k];
        if (!seen.insert(id).second) throw ValidationError(field, "duplicate unit id");
        if (std::none_of(units.begin(), units.end(), [&](const StorageUnit& u) { return u.id == id; })) {
            throw ValidationError(field, "unknown unit id '" + id + "'");
        }
    }
}

void SearchSettings::validate() const {
    if (!(grid_resolution > 0.0)) throw ValidationError("grid_resolution", "must be positive");
    if (multistart < 1) throw ValidationError("multistart", "must be at least 1");
    if (max_evaluations < 1) throw ValidationError("max_evaluations", "must be at least 1");
    if (!(profit_tolerance >= 0.0)) throw ValidationError("profit_tolerance", "must be nonnegative");
    solver.validate();
}

double agg_profit(const Network& network, const DemandProfile& demand, const std::vector<StorageUnit>& units,
                  const std::vector<PriceSchedule>& prices, const std::vector<StorageSchedule>& schedules,
                  const solver::SolverSettings& settings) {
    if (prices.size() != units.size()) throw DimensionMismatch("one price schedule per unit required");
    const NodalInjections d = nodal_injections(network.n_buses, units, schedules);
    const Matrix lmps = clear_market(network, demand, d, 0.0, settings).lmps;
    double total = 0.0;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (prices[i].tau.size() != schedules[i].horizon()) throw DimensionMismatch("price horizon differs");
        total += (lmps.row(units[i].bus).transpose() - prices[i].tau).dot(schedules[i].net());
    }
    return total;
}

GameOutcome solve_stackelberg(const Network& network, const DemandProfile& demand,
                              const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                              const SearchSettings& search) {
    search.validate();
    if (units.empty()) throw ValidationError("units", "at least one unit required");
    const Index horizon = network.horizon();
    const Index k = static_cast<Index>(units.size());
    const double bound = config.price_bound;
    detail::EvaluationBudget budget(search.max_evaluations);

    auto expand = [&](const Vector& z) { return split_prices(z, k, horizon, bound); };
    auto respond = [&](const std::vector<PriceSchedule>& prices) {
        std::vector<StorageSchedule> schedules;
        for (Index i = 0; i < k; ++i) {
            schedules.push_back(su_best_response(units[static_cast<std::size_t>(i)], prices[static_cast<std::size_t>(i)],
                                                 search.solver));
        }
        return schedules;
    };
    auto leader = [&](const Vector& z) {
        budget.charge();
        const auto prices = expand(z);
        try {
            return agg_profit(network, demand, units, prices, respond(prices), search.solver);
        } catch (const InfeasibleDispatch&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    std::vector<Index> buses;
    for (const auto& u : units) buses.push_back(u.bus);
    const auto starts = starting_points(zero_injection_lmps(network, demand, search.solver), buses, horizon, bound, search);
    const detail::BoxSearchResult found = detail::search_box(leader, starts, bound, search);
    auto prices = expand(found.point);
    auto schedules = respond(prices);
    return assemble(network, demand, units, std::move(prices), std::move(schedules), found, budget, search, expand);
}

GameOutcome defection_equilibrium(const Network& network, const DemandProfile& demand,
                                  const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                                  const std::vector<PriceSchedule>& fixed_prices,
                                  const std::vector<StorageSchedule>& fixed_schedules, std::size_t i,
                                  const SearchSettings& search) {
    search.validate();
    if (i >= units.size()) throw DimensionMismatch("unit index out of range");
    if (fixed_prices.size() != units.size() || fixed_schedules.size() != units.size()) {
        throw DimensionMismatch("fixed prices and schedules need one entry per unit");
    }
    const Index horizon = network.horizon();
    const double bound = config.price_bound;
    detail::EvaluationBudget budget(search.max_evaluations);

    auto expand = [&](const Vector& z) {
        auto prices = fixed_prices;
        prices[i] = {z, bound};
        return prices;
    };
    auto respond = [&](const std::vector<PriceSchedule>& prices) {
        auto schedules = fixed_schedules;
        schedules[i] = su_best_response(units[i], prices[i], search.solver);
        return schedules;
    };
    auto leader = [&](const Vector& z) {
        budget.charge();
        const auto prices = expand(z);
        try {
            return agg_profit(network, demand, units, prices, respond(prices), search.solver);
        } catch (const InfeasibleDispatch&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    const auto starts =
        starting_points(zero_injection_lmps(network, demand, search.solver), {units[i].bus}, horizon, bound, search);
    const detail::BoxSearchResult found = detail::search_box(leader, starts, bound, search);
    auto prices = expand(found.point);
    auto schedules = respond(prices);
    return assemble(network, demand, units, std::move(prices), std::move(schedules), found, budget, search, expand);
}

double round_trip_efficiency(const StorageUnit& unit) { return unit.eta_plus * unit.eta_minus; }

StorageSchedule two_period_schedule(const StorageUnit& unit, double x) {
    StorageSchedule s = StorageSchedule::zero(2);
    s.d_minus(0) = x;
    s.d_plus(1) = round_trip_efficiency(unit) * x;
    return s;
}

PriceSchedule two_period_prices(const StorageUnit& unit, double dtau, double price_bound) {
    const double eta = round_trip_efficiency(unit);
    PriceSchedule p{Vector::Zero(2), price_bound};
    if (dtau >= 0.0) {
        p.tau(0) = dtau;
    } else {
        p.tau(1) = -dtau / eta;
        if (p.tau(1) > price_bound) {
            p.tau(1) = price_bound;
            p.tau(0) = dtau + eta * price_bound;
        }
    }
    if (p.tau(0) < 0.0 || p.tau(0) > price_bound) {
        throw ValidationError("dtau", "no price pair in [0, M] realizes this difference");
    }
    return p;
}

double two_period_dtau(const StorageUnit& unit, const PriceSchedule& prices) {
    if (prices.tau.size() != 2) throw DimensionMismatch("scalarization needs a two-period horizon");
    return prices.tau(0) - round_trip_efficiency(unit) * prices.tau(1);
}

}  // namespace esagg
