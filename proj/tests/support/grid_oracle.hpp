#pragma once

// Random two-period units and a brute-force best profit for them, for
// checking the QP-based best response.

#include <algorithm>
#include <optional>
#include <random>

#include "esagg/storage.hpp"

namespace fixture {

using esagg::StorageUnit;
using esagg::Vector;

inline StorageUnit random_unit(std::mt19937& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StorageUnit s;
    s.id = "r";
    s.eta_plus = 0.8 + 0.2 * u(rng);
    s.eta_minus = 0.8 + 0.2 * u(rng);
    s.d_plus_max = 0.3 + 0.7 * u(rng);
    s.d_minus_max = 0.3 + 0.7 * u(rng);
    s.soc_min = 0.1 * u(rng);
    s.soc_max = s.soc_min + 0.4 + 0.8 * u(rng);
    s.soc_init = s.soc_min + (s.soc_max - s.soc_min) * u(rng);
    s.cost = {0.5 + u(rng), 0.5 + u(rng), 0.3 * u(rng)};
    s.extra_matrix.resize(0, 4);
    s.extra_rhs.resize(0);
    return s;
}

// Profit of (d+_1, d+_2, d-_1, d-_2) when every limit holds, else nothing.
inline std::optional<double> grid_profit(const StorageUnit& s, const Vector& tau, double p1, double p2, double m1, double m2) {
    const double tol = 1e-12;
    if (p1 < -tol || p2 < -tol || m1 < -tol || m2 < -tol) return std::nullopt;
    if (p1 > s.d_plus_max + tol || p2 > s.d_plus_max + tol) return std::nullopt;
    if (m1 > s.d_minus_max + tol || m2 > s.d_minus_max + tol) return std::nullopt;
    const double s1 = s.soc_init + s.eta_minus * m1 - p1 / s.eta_plus;
    const double s2 = s1 + s.eta_minus * m2 - p2 / s.eta_plus;
    if (s1 < s.soc_min - tol || s1 > s.soc_max + tol || s2 < s.soc_min - tol || s2 > s.soc_max + tol) {
        return std::nullopt;
    }
    const auto& c = s.cost;
    const double cost = 0.5 * (c.w_plus * (p1 * p1 + p2 * p2) + c.w_minus * (m1 * m1 + m2 * m2) +
                               2.0 * c.w_cross * (p1 * m1 + p2 * m2));
    return tau(0) * (p1 - m1) + tau(1) * (p2 - m2) - cost;
}

// Grid over three of (d+_1, d+_2, d-_1, d-_2) with the fourth closing the
// energy balance eta_minus (d-_1 + d-_2) = (d+_1 + d+_2) / eta_plus. Each
// variable takes a turn as the closing one so optima on a face of the box
// are reachable. Passes at 1e-2, 1e-3 and 1e-4, each around the previous
// best; vertices cut by the SoC limits need the last one.
inline double grid_best_profit(const StorageUnit& s, const Vector& tau) {
    const double k = s.eta_plus * s.eta_minus;
    const double hi[4] = {s.d_plus_max, s.d_plus_max, s.d_minus_max, s.d_minus_max};
    // v = (d+_1, d+_2, d-_1, d-_2); balance reads v0 + v1 = k (v2 + v3).
    auto close = [k](double* v, int free) {
        if (free < 2) {
            v[free] = k * (v[2] + v[3]) - v[1 - free];
        } else {
            v[free] = (v[0] + v[1]) / k - v[5 - free];
        }
    };
    double best = 0.0;
    for (int free = 0; free < 4; ++free) {
        int axes[3], n = 0;
        for (int a = 0; a < 4; ++a) {
            if (a != free) axes[n++] = a;
        }
        double centre[3] = {0.0, 0.0, 0.0};
        double local = 0.0;
        auto scan = [&](const double* lo, const double* up, double h) {
            double v[4];
            for (double a = lo[0]; a <= up[0] + 1e-12; a += h) {
                for (double b = lo[1]; b <= up[1] + 1e-12; b += h) {
                    for (double c = lo[2]; c <= up[2] + 1e-12; c += h) {
                        v[axes[0]] = a;
                        v[axes[1]] = b;
                        v[axes[2]] = c;
                        close(v, free);
                        if (const auto p = grid_profit(s, tau, v[0], v[1], v[2], v[3]); p && *p > local) {
                            local = *p;
                            centre[0] = a;
                            centre[1] = b;
                            centre[2] = c;
                        }
                    }
                }
            }
        };
        const double zero[3] = {0.0, 0.0, 0.0};
        const double full[3] = {hi[axes[0]], hi[axes[1]], hi[axes[2]]};
        scan(zero, full, 1e-2);
        double lo[3], up[3];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max(0.0, centre[a] - 0.05);
            up[a] = std::min(full[a], centre[a] + 0.05);
        }
        scan(lo, up, 1e-3);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max(0.0, centre[a] - 2e-3);
            up[a] = std::min(full[a], centre[a] + 2e-3);
        }
        scan(lo, up, 1e-4);
        best = std::max(best, local);
    }
    return best;
}

}  // namespace fixture
