#pragma once

// Infinitely repeated aggregator game under grim-trigger strategies: both
// sides keep the agreed (prices, schedules) until one deviates, after which
// play reverts to the defection equilibrium forever.

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "esagg/game.hpp"

namespace esagg {

struct RepeatedGameConfig {
    double discount = 0.0;  // delta in (0, 1)
    std::vector<PriceSchedule> agreed_prices;
    std::vector<StorageSchedule> agreed_schedules;

    void validate(const std::string& path = "repeated") const;
};

/// Discounted sum of a finite profit stream, sum_k delta^k stream[k].
double long_term_profit(const std::vector<double>& stream, double discount);

/// Cooperate for rounds 0 .. v-1, collect `deviation` in round v, then
/// `punishment` forever:
///     cooperative / (1 - delta)
///       - delta^v (cooperative - (1 - delta) deviation - delta punishment) / (1 - delta).
/// An empty `defect_round` means cooperation forever.
double long_term_profit(double cooperative, double deviation, double punishment, double discount,
                        std::optional<int> defect_round);

struct CooperationReport {
    std::vector<double> agg_margins;  // alpha_a per unit
    std::vector<double> su_margins;   // alpha_s per unit
    std::vector<double> agg_defection_profits;  // pi_a' per unit
    std::vector<double> su_defection_profits;   // pi_s' per unit
    std::vector<double> su_deviation_profits;   // one-shot best response to the agreed prices
    bool cooperative = false;
};

/// alpha_a,i = pi_a(agreed) - pi_a'_i and
/// alpha_s,i = pi_s,i(agreed) - (1 - delta) pi_s,i(deviation) - delta pi_s'_i.
/// Cooperative iff every margin is >= -1e-9 (a zero margin counts as
/// cooperative).
CooperationReport cooperation_margins(const Network& network, const DemandProfile& demand,
                                      const std::vector<StorageUnit>& units, const AggregatorConfig& config,
                                      const RepeatedGameConfig& repeated, const SearchSettings& search = {});

/// Margins of a two-period, single-unit instance as functions of the agreed
/// charge x_hat and price difference dtau_hat. The defection equilibrium is
/// computed once at construction.
class ScalarCooperation {
public:
    ScalarCooperation(const Network& network, const DemandProfile& demand, const StorageUnit& unit,
                      const AggregatorConfig& config, double discount, const SearchSettings& search = {});

    struct Margins {
        double alpha_s = 0.0;
        double alpha_a = 0.0;
        double su_profit = 0.0;        // agreed
        double agg_profit = 0.0;       // agreed
        double deviation_profit = 0.0; // unit's one-shot deviation
    };

    Margins margins(double x_hat, double dtau_hat) const;

    double agg_defection_profit() const { return defection_.agg_profit; }
    double su_defection_profit() const { return defection_.su_profits.front(); }
    const GameOutcome& defection() const { return defection_; }
    double discount() const { return discount_; }
    const StorageUnit& unit() const { return unit_; }
    double price_bound() const { return config_.price_bound; }

    /// Smallest and largest dtau_hat reachable with prices in [0, M].
    double dtau_min() const;
    double dtau_max() const;

private:
    Network network_;
    DemandProfile demand_;
    StorageUnit unit_;
    AggregatorConfig config_;
    double discount_;
    SearchSettings search_;
    GameOutcome defection_;
};

struct CooperationInterval {
    bool empty = true;
    double lower = 0.0;  // smallest cooperative dtau_hat
    double upper = 0.0;  // largest cooperative dtau_hat
    std::string lower_binding;  // "aggregator" or "su"
    std::string upper_binding;
};

/// Cooperative dtau_hat range at charge x_hat, endpoints by bisection to
/// `tolerance`.
CooperationInterval cooperation_interval(const ScalarCooperation& game, double x_hat, double tolerance = 1e-9);

struct RegionGrid {
    double x_min = 0.0, x_max = 1.0;
    int x_points = 21;
    double dtau_min = -2.0, dtau_max = 0.0;
    int dtau_points = 21;
};

struct RegionCell {
    double x_hat = 0.0;
    double dtau_hat = 0.0;
    double alpha_s = 0.0;
    double alpha_a = 0.0;
    std::string label;  // "A", "As", "Aa" or "none"
};

std::string region_label(double alpha_s, double alpha_a);

/// Classifies every grid cell, evaluated in parallel.
std::vector<RegionCell> cooperation_region(const ScalarCooperation& game, const RegionGrid& grid,
                                           unsigned threads = 0);

/// Columns x_hat, dtau_hat, alpha_s, alpha_a, region_label.
void write_region_csv(std::ostream& out, const std::vector<RegionCell>& cells);

}  // namespace esagg
