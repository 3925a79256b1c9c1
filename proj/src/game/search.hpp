#pragma once

// Derivative-free maximization over a price box, shared by the Stackelberg
// and defection searches.

#include <atomic>
#include <functional>
#include <vector>

#include "esagg/game.hpp"

namespace esagg::detail {

struct BudgetExhausted {};

class EvaluationBudget {
public:
    explicit EvaluationBudget(long limit) : limit_(limit) {}
    void charge() {
        if (++used_ > limit_) throw BudgetExhausted{};
    }
    long used() const { return std::min(used_.load(), limit_); }

private:
    long limit_;
    std::atomic<long> used_{0};
};

struct BoxSearchResult {
    Vector point;
    double value = 0.0;
    bool complete = true;
    std::vector<Vector> ties;  // distinct local optima tied with `point`
};

/// Maximizes f over [0, bound]^n from each start and breaks ties toward the
/// lexicographically smallest point. f may throw BudgetExhausted.
BoxSearchResult search_box(const std::function<double(const Vector&)>& f, const std::vector<Vector>& starts,
                           double bound, const SearchSettings& settings);

}  // namespace esagg::detail
