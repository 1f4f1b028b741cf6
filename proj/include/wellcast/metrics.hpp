#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "wellcast/error.hpp"

namespace wellcast::metrics {

/// Sign convention printed alongside every bias figure.
inline constexpr std::string_view kBiasLegend =
    "positive bias = actual exceeds forecast (under-prediction)";

namespace detail {

inline void check_pair(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw MetricError("length mismatch: " + std::to_string(y.size()) + " actual vs " +
                          std::to_string(y_hat.size()) + " predicted");
    }
    if (y.empty()) throw MetricError("metrics need at least one observation");
}

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace detail

inline double mae(std::span<const double> y, std::span<const double> y_hat) {
    detail::check_pair(y, y_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - y_hat[i]);
    return sum / static_cast<double>(y.size());
}

inline double rmse(std::span<const double> y, std::span<const double> y_hat) {
    detail::check_pair(y, y_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    return std::sqrt(sum / static_cast<double>(y.size()));
}

/// Symmetric MAPE in percent, 0..200. A 0/0 term contributes 0.
inline double smape(std::span<const double> y, std::span<const double> y_hat) {
    detail::check_pair(y, y_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double denom = std::abs(y[i]) + std::abs(y_hat[i]);
        if (denom > 0.0) sum += 2.0 * std::abs(y_hat[i] - y[i]) / denom;
    }
    return 100.0 * sum / static_cast<double>(y.size());
}

/// Mean of (actual - forecast).
inline double forecast_bias(std::span<const double> y, std::span<const double> y_hat) {
    detail::check_pair(y, y_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += y[i] - y_hat[i];
    return sum / static_cast<double>(y.size());
}

/// Prediction direction accuracy in percent: share of steps where the
/// forecast moves in the same direction as the actual. Flat matches flat.
inline double pda(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw MetricError("length mismatch in pda");
    if (y.size() < 2) throw MetricError("pda needs at least 2 observations");
    std::size_t hits = 0;
    for (std::size_t t = 1; t < y.size(); ++t) {
        hits += detail::sign(y[t] - y[t - 1]) == detail::sign(y_hat[t] - y_hat[t - 1]) ? 1 : 0;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(y.size() - 1);
}

enum class DatasetTag { Test, Forecast, SimulatedVsActual };

inline std::string_view to_string(DatasetTag t) {
    switch (t) {
        case DatasetTag::Test: return "test";
        case DatasetTag::Forecast: return "forecast";
        case DatasetTag::SimulatedVsActual: return "simulated-vs-actual";
    }
    return "?";
}

inline DatasetTag parse_tag(std::string_view s) {
    if (s == "test") return DatasetTag::Test;
    if (s == "forecast") return DatasetTag::Forecast;
    if (s == "simulated-vs-actual") return DatasetTag::SimulatedVsActual;
    throw MetricError("unknown dataset tag '" + std::string(s) + "'");
}

struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    double smape = 0.0;
    double forecast_bias = 0.0;
    double pda = 0.0;
    std::size_t n = 0;
    DatasetTag tag = DatasetTag::Test;

    bool operator==(const MetricReport&) const = default;
};

inline MetricReport metric_report(std::span<const double> y, std::span<const double> y_hat,
                                  DatasetTag tag) {
    return MetricReport{mae(y, y_hat), rmse(y, y_hat),  smape(y, y_hat),
                        forecast_bias(y, y_hat), pda(y, y_hat), y.size(), tag};
}

}  // namespace wellcast::metrics
