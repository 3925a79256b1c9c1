#pragma once

// The two-period single-bus instance used throughout the worked examples:
// marginal cost lambda(x) = x, demand (0, 5), one unit with round-trip
// efficiency 0.95, unit limits, SoC in [0, 1], cost 1/2 sum d_t^2.

#include "esagg/game.hpp"

namespace fixture {

inline esagg::Network example1_network() {
    esagg::Network n;
    n.n_buses = 1;
    n.gen_intercept = esagg::Matrix::Zero(1, 2);
    n.gen_slope = esagg::Matrix::Ones(1, 2);
    n.shift_factors.resize(0, 1);
    n.line_limits.resize(0);
    return n;
}

inline esagg::DemandProfile example1_demand() {
    esagg::DemandProfile q(1, 2);
    q << 0.0, 5.0;
    return q;
}

inline esagg::StorageUnit example1_unit() {
    esagg::StorageUnit u;
    u.id = "su1";
    u.bus = 0;
    u.eta_plus = 0.95;
    u.eta_minus = 1.0;
    u.d_plus_max = 1.0;
    u.d_minus_max = 1.0;
    u.soc_min = 0.0;
    u.soc_max = 1.0;
    u.soc_init = 0.0;
    u.extra_matrix.resize(0, 4);
    u.extra_rhs.resize(0);
    return u;
}

inline esagg::AggregatorConfig example1_config() { return {10.0, {"su1"}}; }

}  // namespace fixture
