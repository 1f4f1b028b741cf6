#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wellcast/date.hpp"
#include "wellcast/error.hpp"
#include "wellcast/matrix.hpp"

namespace wellcast::models {

/// Supervised view of a multivariate series: window t holds rows [t, t+L)
/// of the inputs and its target is row t+L of the target column.
struct WindowedDataset {
    std::size_t lookback = 0;
    std::size_t features = 0;
    std::vector<double> windows;     ///< m x L x F, sample-major then time-major
    std::vector<double> targets;     ///< m
    std::vector<Date> origin_dates;  ///< last input row of each window; empty if undated

    std::size_t size() const noexcept { return targets.size(); }
    std::size_t window_length() const noexcept { return lookback * features; }

    std::span<const double> window(std::size_t i) const {
        return {windows.data() + i * window_length(), window_length()};
    }

    double at(std::size_t i, std::size_t step, std::size_t feature) const {
        return windows[(i * lookback + step) * features + feature];
    }

    /// Windows [first, last).
    WindowedDataset slice(std::size_t first, std::size_t last) const {
        WindowedDataset out{lookback, features, {}, {}, {}};
        out.windows.assign(windows.begin() + first * window_length(),
                           windows.begin() + last * window_length());
        out.targets.assign(targets.begin() + first, targets.begin() + last);
        if (!origin_dates.empty()) {
            out.origin_dates.assign(origin_dates.begin() + first, origin_dates.begin() + last);
        }
        return out;
    }

    /// Windows in the given order.
    WindowedDataset select(std::span<const std::size_t> order) const {
        WindowedDataset out{lookback, features, {}, {}, {}};
        out.windows.reserve(order.size() * window_length());
        for (std::size_t i : order) {
            const auto w = window(i);
            out.windows.insert(out.windows.end(), w.begin(), w.end());
            out.targets.push_back(targets[i]);
            if (!origin_dates.empty()) out.origin_dates.push_back(origin_dates[i]);
        }
        return out;
    }
};

/// Frames rows of `x` and `y` as m = n - L one-step-ahead samples.
inline WindowedDataset make_windows(const Matrix& x, std::span<const double> y, std::size_t lookback,
                                    std::span<const Date> dates = {}) {
    const std::size_t n = x.rows();
    if (y.size() != n) throw WindowingError("feature and target row counts differ");
    if (!dates.empty() && dates.size() != n) throw WindowingError("date count differs from rows");
    if (lookback == 0) throw WindowingError("lookback must be >= 1");
    if (n <= lookback) {
        throw WindowingError("need more than " + std::to_string(lookback) + " rows to window, got " +
                             std::to_string(n));
    }
    const std::size_t m = n - lookback;
    WindowedDataset ds{lookback, x.cols(), {}, {}, {}};
    ds.windows.reserve(m * lookback * x.cols());
    ds.targets.reserve(m);
    for (std::size_t t = 0; t < m; ++t) {
        for (std::size_t r = t; r < t + lookback; ++r) {
            const auto row = x.row(r);
            ds.windows.insert(ds.windows.end(), row.begin(), row.end());
        }
        ds.targets.push_back(y[t + lookback]);
        if (!dates.empty()) ds.origin_dates.push_back(dates[t + lookback - 1]);
    }
    return ds;
}

}  // namespace wellcast::models
