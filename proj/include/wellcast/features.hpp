#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wellcast/error.hpp"
#include "wellcast/ingest.hpp"
#include "wellcast/matrix.hpp"

namespace wellcast::features {

/// Rate and pressures for a Productivity Index evaluation. Pressures share a unit.
struct PIInputs {
    double q = 0.0;
    double p_res = 0.0;
    double p_wf = 0.0;
};

struct PIResult {
    double value = 0.0;
    /// Set when p_wf exceeds p_res (injection regime); the value is still returned.
    bool injection = false;
};

/// Rate per unit drawdown: q / (p_res - p_wf).
inline PIResult productivity_index(const PIInputs& in) {
    const double drawdown = in.p_res - in.p_wf;
    if (drawdown == 0.0) {
        throw DomainError("productivity index undefined: reservoir and flowing pressure are equal");
    }
    return PIResult{in.q / drawdown, drawdown < 0.0};
}

namespace detail {

inline double pressure_ratio(double p_wf, double p_res) {
    if (!(p_res > 0.0)) throw DomainError("reservoir pressure must be positive");
    const double r = p_wf / p_res;
    if (!(r >= 0.0 && r <= 1.0)) {
        throw DomainError("pressure ratio p_wf/p_res = " + std::to_string(r) + " outside [0, 1]");
    }
    return r;
}

}  // namespace detail

// The Wiggins quadratics are evaluated in factored form, (1 - r)(1 + c r),
// so both endpoints come out exact in floating point.

/// Oil rate as a fraction of the maximum: 1 - 0.52 r - 0.48 r^2, r = p_wf / p_res.
inline double wiggins_oil_ratio(double p_wf, double p_res) {
    const double r = detail::pressure_ratio(p_wf, p_res);
    return (1.0 - r) * (1.0 + 0.48 * r);
}

/// Water rate as a fraction of the maximum: 1 - 0.72 r - 0.28 r^2.
inline double wiggins_water_ratio(double p_wf, double p_res) {
    const double r = detail::pressure_ratio(p_wf, p_res);
    return (1.0 - r) * (1.0 + 0.28 * r);
}

struct FeatureSpec {
    std::string target = "OPR_H";
    std::vector<std::string> exogenous{"WPR_H", "GPR_H", "BHP_H"};
    std::size_t lookback = 30;

    void validate() const {
        if (lookback < 1) throw FeatureError("lookback must be >= 1");
        if (std::find(exogenous.begin(), exogenous.end(), target) != exogenous.end()) {
            throw FeatureError("target '" + target + "' is also listed as exogenous");
        }
    }

    /// Input channel names: exogenous columns, then the target's own history.
    std::vector<std::string> input_columns() const {
        std::vector<std::string> cols = exogenous;
        cols.push_back(target);
        return cols;
    }

    bool operator==(const FeatureSpec&) const = default;
};

struct FeatureTable {
    Matrix x;               ///< n x (|exogenous| + 1)
    std::vector<double> y;  ///< target column
};

inline FeatureTable select_features(const SeriesFrame& frame, const FeatureSpec& spec) {
    spec.validate();
    const auto names = spec.input_columns();
    for (const auto& name : names) {
        if (!frame.has(name)) throw FeatureError("feature column '" + name + "' not in frame");
        if (frame.missing_count(name) != 0) {
            throw FeatureError("feature column '" + name + "' has missing values; impute first");
        }
    }
    FeatureTable t{Matrix(frame.rows(), names.size()), frame.dense(spec.target)};
    for (std::size_t c = 0; c < names.size(); ++c) {
        const auto col = frame.dense(names[c]);
        for (std::size_t r = 0; r < col.size(); ++r) t.x(r, c) = col[r];
    }
    return t;
}

/// Per-column z-score statistics (population standard deviation).
struct Scaler {
    std::vector<double> mean;
    std::vector<double> std;

    std::size_t columns() const noexcept { return mean.size(); }

    double scale(std::size_t c, double v) const { return (v - mean[c]) / std[c]; }
    double unscale(std::size_t c, double v) const { return v * std[c] + mean[c]; }

    bool operator==(const Scaler&) const = default;
};

inline Scaler fit_scaler(const Matrix& x_train) {
    if (x_train.rows() == 0) throw ScalerError("cannot fit a scaler on zero rows");
    Scaler s;
    const double n = static_cast<double>(x_train.rows());
    for (std::size_t c = 0; c < x_train.cols(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < x_train.rows(); ++r) sum += x_train(r, c);
        const double mean = sum / n;
        double sq = 0.0;
        for (std::size_t r = 0; r < x_train.rows(); ++r) {
            const double d = x_train(r, c) - mean;
            sq += d * d;
        }
        const double sd = std::sqrt(sq / n);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            throw ScalerError("column " + std::to_string(c) + " is constant; cannot scale");
        }
        s.mean.push_back(mean);
        s.std.push_back(sd);
    }
    return s;
}

inline Scaler fit_scaler(std::span<const double> column) {
    Matrix m(column.size(), 1);
    std::copy(column.begin(), column.end(), m.data().begin());
    return fit_scaler(m);
}

inline Matrix apply_scaler(const Scaler& s, const Matrix& x) {
    if (x.cols() != s.columns()) {
        throw ScalerError("scaler has " + std::to_string(s.columns()) + " columns, input has " +
                          std::to_string(x.cols()));
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = s.scale(c, x(r, c));
    }
    return out;
}

/// Adds derived physics columns: PI against a fixed reservoir pressure and
/// both Wiggins ratios from the flowing-pressure column. Optional; not part
/// of the default feature set.
inline SeriesFrame add_physics_columns(const SeriesFrame& frame, const std::string& rate_col,
                                       const std::string& bhp_col, double p_res) {
    SeriesFrame out = frame;
    const auto& rate = frame.column(rate_col).values;
    const auto& bhp = frame.column(bhp_col).values;
    std::vector<Cell> pi(frame.rows()), oil(frame.rows()), water(frame.rows());
    for (std::size_t r = 0; r < frame.rows(); ++r) {
        if (!rate[r] || !bhp[r]) continue;
        if (*bhp[r] != p_res) pi[r] = productivity_index({*rate[r], p_res, *bhp[r]}).value;
        if (*bhp[r] >= 0.0 && *bhp[r] <= p_res) {
            oil[r] = wiggins_oil_ratio(*bhp[r], p_res);
            water[r] = wiggins_water_ratio(*bhp[r], p_res);
        }
    }
    out.add_column("PI", std::move(pi));
    out.add_column("IPR_OIL", std::move(oil));
    out.add_column("IPR_WATER", std::move(water));
    return out;
}

}  // namespace wellcast::features
