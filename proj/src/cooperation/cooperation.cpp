#include "esagg/cooperation.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "esagg/parallel.hpp"

namespace esagg {
namespace {

constexpr double kCooperativeSlack = 1e-9;

void check_discount(double discount) {
    if (!(discount > 0.0 && discount < 1.0)) throw ValidationError("discount", "must lie in (0, 1)");
}

double golden_max(const std::function<double(double)>& f, double lo, double hi, double& arg) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int k = 0; k < 200 && b - a > 1e-12 * std::max(1.0, std::abs(a) + std::abs(b)); ++k) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    arg = fc >= fd ? c : d;
    return std::max(fc, fd);
}

// Boundary of {f >= 0} between a point where it holds and one where it fails.
double bisect_boundary(const std::function<double(double)>& f, double inside, double outside, double tolerance) {
    while (std::abs(outside - inside) > tolerance) {
        const double mid = 0.5 * (inside + outside);
        (f(mid) >= 0.0 ? inside : outside) = mid;
    }
    return inside;
}

}  // namespace

void RepeatedGameConfig::validate(const std::string& path) const {
    if (!(discount > 0.0 && discount < 1.0)) throw ValidationError(path + ".discount", "must lie in (0, 1)");
    if (agreed_prices.size() != agreed_schedules.size()) {
        throw ValidationError(path + ".agreed_prices", "need one agreed price schedule per agreed schedule");
    }
}

double long_term_profit(const std::vector<double>& stream, double discount) {
    check_discount(discount);
    double total = 0.0, weight = 1.0;
    for (double p : stream) {
        total += weight * p;
        weight *= discount;
    }
    return total;
}

double long_term_profit(double cooperative, double deviation, double punishment, double discount,
                        std::optional<int> defect_round) {
    check_discount(discount);
    const double forever = cooperative / (1.0 - discount);
    if (!defect_round) return forever;
    if (*defect_round < 0) throw ValidationError("defect_round", "must be nonnegative");
    const double dv = std::pow(discount, *defect_round);
    return forever -
           dv * (cooperative - (1.0 - discount) * deviation - discount * punishment) / (1.0 - discount);
}

CooperationReport cooperation_margins(const Network& network, const DemandProfile& demand,
                                      const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                                      const RepeatedGameConfig& repeated, const SearchSettings& search) {
    repeated.validate();
    if (repeated.agreed_prices.size() != units.size()) {
        throw DimensionMismatch("agreed prices and schedules need one entry per unit");
    }
    const double delta = repeated.discount;
    const double agreed_agg =
        agg_profit(network, demand, units, repeated.agreed_prices, repeated.agreed_schedules, search.solver);

    CooperationReport r;
    r.cooperative = true;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const GameOutcome defect = defection_equilibrium(network, demand, units, config, repeated.agreed_prices,
                                                         repeated.agreed_schedules, i, search);
        const PriceSchedule& tau = repeated.agreed_prices[i];
        const double agreed_su = su_profit(units[i], repeated.agreed_schedules[i], tau);
        const double deviation = su_profit(units[i], su_best_response(units[i], tau, search.solver), tau);
        r.agg_defection_profits.push_back(defect.agg_profit);
        r.su_defection_profits.push_back(defect.su_profits[i]);
        r.su_deviation_profits.push_back(deviation);
        r.agg_margins.push_back(agreed_agg - defect.agg_profit);
        r.su_margins.push_back(agreed_su - (1.0 - delta) * deviation - delta * defect.su_profits[i]);
        r.cooperative = r.cooperative && r.agg_margins.back() >= -kCooperativeSlack &&
                        r.su_margins.back() >= -kCooperativeSlack;
    }
    return r;
}

ScalarCooperation::ScalarCooperation(const Network& network, const DemandProfile& demand, const StorageUnit& unit,
                                     const AggregatorConfig& config, double discount, const SearchSettings& search)
    : network_(network), demand_(demand), unit_(unit), config_(config), discount_(discount), search_(search) {
    check_discount(discount);
    if (network.horizon() != 2) throw ValidationError("network.gen_cost", "scalarization needs two periods");
    defection_ = solve_stackelberg(network_, demand_, {unit_}, config_, search_);
}

ScalarCooperation::Margins ScalarCooperation::margins(double x_hat, double dtau_hat) const {
    const StorageSchedule schedule = two_period_schedule(unit_, x_hat);
    const PriceSchedule prices = two_period_prices(unit_, dtau_hat, config_.price_bound);
    Margins m;
    m.su_profit = su_profit(unit_, schedule, prices);
    m.agg_profit = agg_profit(network_, demand_, {unit_}, {prices}, {schedule}, search_.solver);
    m.deviation_profit = su_profit(unit_, su_best_response(unit_, prices, search_.solver), prices);
    m.alpha_a = m.agg_profit - agg_defection_profit();
    m.alpha_s = m.su_profit - (1.0 - discount_) * m.deviation_profit - discount_ * su_defection_profit();
    return m;
}

double ScalarCooperation::dtau_min() const { return -round_trip_efficiency(unit_) * config_.price_bound; }
double ScalarCooperation::dtau_max() const { return config_.price_bound; }

CooperationInterval cooperation_interval(const ScalarCooperation& game, double x_hat, double tolerance) {
    auto worst = [&](double dtau) {
        const auto m = game.margins(x_hat, dtau);
        return std::min(m.alpha_a, m.alpha_s) + kCooperativeSlack;
    };
    auto binding = [&](double dtau) {
        const auto m = game.margins(x_hat, dtau);
        return m.alpha_a <= m.alpha_s ? std::string("aggregator") : std::string("su");
    };
    CooperationInterval out;
    const double lo = game.dtau_min(), hi = game.dtau_max();
    double peak = 0.0;
    // min of two concave functions of dtau is concave
    if (golden_max(worst, lo, hi, peak) < 0.0) return out;
    out.empty = false;
    out.lower = worst(lo) >= 0.0 ? lo : bisect_boundary(worst, peak, lo, tolerance);
    out.upper = worst(hi) >= 0.0 ? hi : bisect_boundary(worst, peak, hi, tolerance);
    out.lower_binding = binding(out.lower);
    out.upper_binding = binding(out.upper);
    return out;
}

std::string region_label(double alpha_s, double alpha_a) {
    const bool s = alpha_s >= -kCooperativeSlack, a = alpha_a >= -kCooperativeSlack;
    if (s && a) return "A";
    if (s) return "As";
    if (a) return "Aa";
    return "none";
}

std::vector<RegionCell> cooperation_region(const ScalarCooperation& game, const RegionGrid& grid, unsigned threads) {
    if (grid.x_points < 1 || grid.dtau_points < 1) throw ValidationError("grid", "needs at least one point per axis");
    auto axis = [](double lo, double hi, int n, int k) { return n == 1 ? lo : lo + (hi - lo) * k / (n - 1); };
    std::vector<RegionCell> cells(static_cast<std::size_t>(grid.x_points) * static_cast<std::size_t>(grid.dtau_points));
    parallel_for(
        cells.size(),
        [&](std::size_t c) {
            const int ix = static_cast<int>(c / static_cast<std::size_t>(grid.dtau_points));
            const int it = static_cast<int>(c % static_cast<std::size_t>(grid.dtau_points));
            RegionCell& cell = cells[c];
            cell.x_hat = axis(grid.x_min, grid.x_max, grid.x_points, ix);
            cell.dtau_hat = axis(grid.dtau_min, grid.dtau_max, grid.dtau_points, it);
            const auto m = game.margins(cell.x_hat, cell.dtau_hat);
            cell.alpha_s = m.alpha_s;
            cell.alpha_a = m.alpha_a;
            cell.label = region_label(m.alpha_s, m.alpha_a);
        },
        threads);
    return cells;
}

void write_region_csv(std::ostream& out, const std::vector<RegionCell>& cells) {
    out << "x_hat,dtau_hat,alpha_s,alpha_a,region_label\n";
    for (const auto& c : cells) {
        fmt::print(out, "{:.12g},{:.12g},{:.12g},{:.12g},{}\n", c.x_hat, c.dtau_hat, c.alpha_s, c.alpha_a, c.label);
    }
}

}  // namespace esagg
