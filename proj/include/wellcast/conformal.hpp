#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wellcast/error.hpp"

namespace wellcast::conformal {

inline constexpr std::string_view kExchangeabilityNote =
    "intervals assume calibration and forecast residuals are exchangeable; "
    "temporal drift can violate this";

struct ConformalCalibration {
    double alpha = 0.05;
    std::vector<double> scores;  ///< ascending
    double epsilon = 0.0;
    std::size_t n_cal = 0;
    std::size_t rank = 0;        ///< 1-based rank of epsilon within scores
};

struct IntervalForecast {
    std::vector<double> point;
    std::vector<double> lower;
    std::vector<double> upper;
    double alpha = 0.05;
};

struct CoverageReport {
    double coverage = 0.0;
    std::vector<std::size_t> out_of_bounds;

    double out_of_bounds_fraction() const { return 1.0 - coverage; }
};

/// Absolute residuals, sorted ascending.
inline std::vector<double> nonconformity_scores(std::span<const double> y,
                                                std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw CalibrationError("length mismatch: " + std::to_string(y.size()) + " actual vs " +
                               std::to_string(y_hat.size()) + " predicted");
    }
    if (y.empty()) throw CalibrationError("no calibration residuals");
    std::vector<double> s(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        s[i] = std::abs(y[i] - y_hat[i]);
        if (!std::isfinite(s[i])) throw CalibrationError("non-finite residual at " + std::to_string(i));
    }
    std::sort(s.begin(), s.end());
    return s;
}

/// ceil((n + 1)(1 - alpha)). The product is nudged down by a few ulps so
/// that values like 20 * 0.95 land on the integer they represent.
inline std::size_t conformal_rank(std::size_t n, double alpha) {
    const double exact = static_cast<double>(n + 1) * (1.0 - alpha);
    return static_cast<std::size_t>(std::ceil(exact - 1e-9 * static_cast<double>(n + 1)));
}

/// Smallest calibration size for which the rank fits.
inline std::size_t minimum_calibration_size(double alpha) {
    std::size_t n = 1;
    while (conformal_rank(n, alpha) > n) ++n;
    return n;
}

/// Half-width epsilon = k-th smallest score, k = ceil((n + 1)(1 - alpha)).
inline ConformalCalibration calibrate(std::vector<double> scores, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw CalibrationError("alpha must be in (0, 1)");
    if (scores.empty()) throw CalibrationError("no calibration scores");
    for (double s : scores) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw CalibrationError("scores must be finite and nonnegative");
        }
    }
    std::sort(scores.begin(), scores.end());
    const std::size_t n = scores.size();
    const std::size_t k = conformal_rank(n, alpha);
    if (k > n) {
        throw CalibrationError("alpha=" + std::to_string(alpha) + " needs rank k=" +
                               std::to_string(k) + " but only n=" + std::to_string(n) +
                               " scores; need n >= " + std::to_string(minimum_calibration_size(alpha)));
    }
    ConformalCalibration cal;
    cal.alpha = alpha;
    cal.epsilon = scores[k - 1];
    cal.n_cal = n;
    cal.rank = k;
    cal.scores = std::move(scores);
    return cal;
}

/// [point - epsilon, point + epsilon] elementwise.
inline IntervalForecast predict_interval(std::span<const double> point,
                                         const ConformalCalibration& cal) {
    IntervalForecast f;
    f.alpha = cal.alpha;
    f.point.assign(point.begin(), point.end());
    f.lower.reserve(point.size());
    f.upper.reserve(point.size());
    for (double p : point) {
        f.lower.push_back(p - cal.epsilon);
        f.upper.push_back(p + cal.epsilon);
    }
    return f;
}

/// Clamps lower bounds at zero, for quantities that cannot go negative.
inline IntervalForecast clamp_nonnegative(IntervalForecast f) {
    for (double& l : f.lower) l = std::max(l, 0.0);
    return f;
}

/// Fraction of actuals inside the closed intervals plus the violating indices.
inline CoverageReport coverage_report(const IntervalForecast& intervals,
                                      std::span<const double> actual) {
    if (intervals.lower.size() != actual.size() || intervals.upper.size() != actual.size()) {
        throw ReportError("interval count " + std::to_string(intervals.lower.size()) +
                          " does not match actual count " + std::to_string(actual.size()));
    }
    if (actual.empty()) throw ReportError("coverage needs at least one observation");
    CoverageReport r;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!(intervals.lower[i] <= actual[i] && actual[i] <= intervals.upper[i])) {
            r.out_of_bounds.push_back(i);
        }
    }
    r.coverage = 1.0 - static_cast<double>(r.out_of_bounds.size()) /
                           static_cast<double>(actual.size());
    return r;
}

/// True when coverage falls more than 5 points below the 1 - alpha target.
inline bool coverage_shortfall(double coverage, double alpha) {
    return coverage < (1.0 - alpha) - 0.05;
}

}  // namespace wellcast::conformal
