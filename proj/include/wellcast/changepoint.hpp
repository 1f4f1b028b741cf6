#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wellcast/error.hpp"

namespace wellcast::changepoint {

/// Shortest segment any segmentation may contain.
inline constexpr std::size_t kMinSegment = 2;
/// Largest series the exhaustive oracle accepts.
inline constexpr std::size_t kBruteForceMax = 16;

struct Segmentation {
    /// Strictly increasing indices in (0, n); each starts a new segment.
    std::vector<std::size_t> breakpoints;
    /// Sum of segment costs plus penalty per breakpoint.
    double total_cost = 0.0;
};

/// Within-segment sum of squared deviations from the segment mean over [i, j).
inline double l2_cost(std::span<const double> x, std::size_t i, std::size_t j) {
    if (!(i < j && j <= x.size())) {
        throw DomainError("l2_cost needs 0 <= i < j <= n (got i=" + std::to_string(i) +
                          ", j=" + std::to_string(j) + ")");
    }
    double sum = 0.0;
    for (std::size_t t = i; t < j; ++t) sum += x[t];
    const double mean = sum / static_cast<double>(j - i);
    double cost = 0.0;
    for (std::size_t t = i; t < j; ++t) cost += (x[t] - mean) * (x[t] - mean);
    return cost;
}

/// Objective of a given segmentation, evaluated segment by segment.
inline double segmentation_cost(std::span<const double> x, std::span<const std::size_t> bkps,
                                double penalty) {
    double total = 0.0;
    std::size_t start = 0;
    for (std::size_t b : bkps) {
        total += l2_cost(x, start, b);
        start = b;
    }
    total += l2_cost(x, start, x.size());
    return total + penalty * static_cast<double>(bkps.size());
}

namespace detail {

inline void check_input(std::span<const double> x, double penalty) {
    if (x.size() < 2) throw DomainError("segmentation needs at least 2 samples");
    if (!(penalty >= 0.0) || !std::isfinite(penalty)) {
        throw DomainError("penalty must be finite and >= 0");
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw DomainError("series contains non-finite values");
    }
}

/// O(1) segment costs from prefix sums of the mean-centred series.
class PrefixCost {
public:
    explicit PrefixCost(std::span<const double> x) : sum_(x.size() + 1, 0.0), sq_(x.size() + 1, 0.0) {
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        for (std::size_t t = 0; t < x.size(); ++t) {
            const double c = x[t] - mean;
            sum_[t + 1] = sum_[t] + c;
            sq_[t + 1] = sq_[t] + c * c;
        }
    }

    double operator()(std::size_t i, std::size_t j) const {
        const double s = sum_[j] - sum_[i];
        const double cost = (sq_[j] - sq_[i]) - s * s / static_cast<double>(j - i);
        return cost > 0.0 ? cost : 0.0;
    }

private:
    std::vector<double> sum_;
    std::vector<double> sq_;
};

}  // namespace detail

/// Exact penalized segmentation by PELT. Segments are at least kMinSegment
/// long. Candidate s is dropped once F(s) + C(s, t) > F(t); the drop takes
/// effect one step later because a segment of length 1 cannot follow t.
inline Segmentation pelt(std::span<const double> x, double penalty) {
    detail::check_input(x, penalty);
    const std::size_t n = x.size();
    const detail::PrefixCost cost(x);
    constexpr double inf = std::numeric_limits<double>::infinity();

    std::vector<double> best(n + 1, inf);
    std::vector<std::size_t> last(n + 1, 0);
    best[0] = -penalty;

    struct Candidate {
        std::size_t s;
        std::size_t drop_after;  // remove once t exceeds this
    };
    std::vector<Candidate> live{{0, std::numeric_limits<std::size_t>::max()}};
    std::vector<Candidate> next;

    for (std::size_t t = kMinSegment; t <= n; ++t) {
        // s = t - kMinSegment becomes admissible now.
        if (t - kMinSegment >= kMinSegment) {
            live.push_back({t - kMinSegment, std::numeric_limits<std::size_t>::max()});
        }
        double f = inf;
        std::size_t arg = 0;
        for (const Candidate& c : live) {
            const double v = best[c.s] + cost(c.s, t) + penalty;
            if (v < f) {
                f = v;
                arg = c.s;
            }
        }
        best[t] = f;
        last[t] = arg;

        next.clear();
        for (Candidate c : live) {
            if (c.drop_after < t) continue;
            if (c.drop_after == std::numeric_limits<std::size_t>::max() &&
                best[c.s] + cost(c.s, t) > f) {
                c.drop_after = t + 1;
            }
            next.push_back(c);
        }
        live.swap(next);
    }

    Segmentation seg;
    for (std::size_t t = last[n]; t > 0; t = last[t]) seg.breakpoints.push_back(t);
    std::reverse(seg.breakpoints.begin(), seg.breakpoints.end());
    seg.total_cost = segmentation_cost(x, seg.breakpoints, penalty);
    return seg;
}

/// Greedy binary segmentation: repeatedly applies the single split with the
/// largest cost reduction, stopping when that reduction is below the penalty
/// or `max_bkps` breakpoints exist.
inline Segmentation binseg(std::span<const double> x, double penalty,
                           std::optional<std::size_t> max_bkps = std::nullopt) {
    detail::check_input(x, penalty);
    const detail::PrefixCost cost(x);
    std::vector<std::size_t> bounds{0, x.size()};
    const std::size_t cap = max_bkps.value_or(std::numeric_limits<std::size_t>::max());

    while (bounds.size() - 2 < cap) {
        double gain = -1.0;
        std::size_t split = 0;
        for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
            const std::size_t a = bounds[k];
            const std::size_t b = bounds[k + 1];
            if (b - a < 2 * kMinSegment) continue;
            const double whole = cost(a, b);
            for (std::size_t m = a + kMinSegment; m + kMinSegment <= b; ++m) {
                const double g = whole - cost(a, m) - cost(m, b);
                if (g > gain) {
                    gain = g;
                    split = m;
                }
            }
        }
        if (split == 0 || gain < penalty) break;
        bounds.insert(std::upper_bound(bounds.begin(), bounds.end(), split), split);
    }

    Segmentation seg;
    seg.breakpoints.assign(bounds.begin() + 1, bounds.end() - 1);
    seg.total_cost = segmentation_cost(x, seg.breakpoints, penalty);
    return seg;
}

/// Exhaustive minimum of the penalized objective. Test oracle; n <= 16.
inline Segmentation brute_force_segmentation(std::span<const double> x, double penalty) {
    if (x.size() > kBruteForceMax) {
        throw OracleError("brute-force segmentation is limited to n <= " +
                          std::to_string(kBruteForceMax) + " (got " + std::to_string(x.size()) + ")");
    }
    detail::check_input(x, penalty);
    const std::size_t n = x.size();
    Segmentation best;
    best.total_cost = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> bkps;
    // Bit i of mask set means a breakpoint at index i + 1.
    for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
        bkps.clear();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (mask & (1u << i)) bkps.push_back(i + 1);
        }
        bool feasible = true;
        std::size_t prev = 0;
        for (std::size_t b : bkps) {
            feasible = feasible && b - prev >= kMinSegment;
            prev = b;
        }
        if (!feasible || n - prev < kMinSegment) continue;
        const double c = segmentation_cost(x, bkps, penalty);
        if (c < best.total_cost) {
            best.total_cost = c;
            best.breakpoints = bkps;
        }
    }
    return best;
}

/// 2 * sigma^2 * log(n), with sigma^2 = mean squared first difference / 2.
inline double default_penalty(std::span<const double> x) {
    if (x.size() < 2) throw DomainError("default penalty needs at least 2 samples");
    double sq = 0.0;
    for (std::size_t t = 1; t < x.size(); ++t) sq += (x[t] - x[t - 1]) * (x[t] - x[t - 1]);
    const double sigma2 = sq / (2.0 * static_cast<double>(x.size() - 1));
    return 2.0 * sigma2 * std::log(static_cast<double>(x.size()));
}

}  // namespace wellcast::changepoint
