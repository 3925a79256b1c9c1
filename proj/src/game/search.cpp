#include "search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esagg/parallel.hpp"

namespace esagg::detail {
namespace {

struct Local {
    Vector point;
    double value = -std::numeric_limits<double>::infinity();
    bool complete = true;
};

// Opportunistic compass search over the coordinates in [first, n). Keeps the
// best point seen if the budget runs out.
Local compass(const std::function<double(const Vector&)>& f, Vector z, double bound, double step, double final_step,
              Index first) {
    Local best;
    best.point = z;
    try {
        best.value = f(z);
        while (step >= final_step) {
            bool moved = false;
            for (Index j = first; j < z.size(); ++j) {
                for (double dir : {1.0, -1.0}) {
                    Vector trial = best.point;
                    trial(j) = std::clamp(trial(j) + dir * step, 0.0, bound);
                    if (trial(j) == best.point(j)) continue;
                    const double v = f(trial);
                    if (v > best.value + 1e-14 * std::max(1.0, std::abs(best.value))) {
                        best.point = std::move(trial);
                        best.value = v;
                        moved = true;
                        break;
                    }
                }
            }
            if (!moved) step *= 0.5;
        }
    } catch (const BudgetExhausted&) {
        best.complete = false;
    }
    return best;
}

bool lex_less(const Vector& a, const Vector& b) {
    for (Index k = 0; k < a.size(); ++k) {
        if (a(k) < b(k)) return true;
        if (a(k) > b(k)) return false;
    }
    return false;
}

}  // namespace

BoxSearchResult search_box(const std::function<double(const Vector&)>& f, const std::vector<Vector>& starts,
                           double bound, const SearchSettings& settings) {
    const double initial_step = std::max(bound / 4.0, settings.grid_resolution);
    std::vector<Local> locals(starts.size());
    parallel_for(
        starts.size(),
        [&](std::size_t s) { locals[s] = compass(f, starts[s], bound, initial_step, settings.grid_resolution, 0); },
        settings.threads);

    BoxSearchResult out;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& l : locals) {
        best = std::max(best, l.value);
        out.complete = out.complete && l.complete;
    }
    const double tol = settings.profit_tolerance * std::max(1.0, std::abs(best));

    std::vector<Vector> tied;
    for (const auto& l : locals) {
        if (l.value < best - tol) continue;
        const bool seen = std::any_of(tied.begin(), tied.end(), [&](const Vector& v) {
            return (v - l.point).cwiseAbs().maxCoeff() <= 1e3 * settings.grid_resolution;
        });
        if (!seen) tied.push_back(l.point);
    }
    std::sort(tied.begin(), tied.end(), lex_less);
    out.ties = tied;

    // Push each coordinate down as far as the remaining coordinates can
    // re-polish the leader profit back to within the tolerance.
    Vector z = tied.front();
    double value = best;
    try {
        for (Index j = 0; j < z.size() && out.complete; ++j) {
            auto attempt = [&](double v, Local& result) {
                Vector trial = z;
                trial(j) = v;
                if (j + 1 < z.size()) {
                    const double step = std::max(std::abs(z(j) - v), settings.grid_resolution);
                    result = compass(f, trial, bound, step, settings.grid_resolution, j + 1);
                    if (!result.complete) throw BudgetExhausted{};
                } else {
                    result.point = trial;
                    result.value = f(trial);
                }
                return result.value >= best - tol;
            };
            if (z(j) <= settings.grid_resolution) continue;
            Local result;
            if (attempt(0.0, result)) {
                z = result.point;
                value = result.value;
                continue;
            }
            double lo = 0.0, hi = z(j);
            while (hi - lo > settings.grid_resolution) {
                const double mid = 0.5 * (lo + hi);
                if (attempt(mid, result)) {
                    hi = mid;
                    z = result.point;
                    value = result.value;
                } else {
                    lo = mid;
                }
            }
        }
    } catch (const BudgetExhausted&) {
        out.complete = false;
    }
    out.point = z;
    out.value = value;
    return out;
}

}  // namespace esagg::detail
