#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "wellcast/error.hpp"
#include "wellcast/features.hpp"
#include "wellcast/gbt.hpp"
#include "wellcast/matrix.hpp"
#include "wellcast/recurrent.hpp"
#include "wellcast/rng.hpp"
#include "wellcast/windows.hpp"

namespace wellcast::models {

enum class ModelKind { LSTM, BiLSTM, GRU, GBT };

inline std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LSTM: return "lstm";
        case ModelKind::BiLSTM: return "bilstm";
        case ModelKind::GRU: return "gru";
        case ModelKind::GBT: return "gbt";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "lstm") return ModelKind::LSTM;
    if (s == "bilstm") return ModelKind::BiLSTM;
    if (s == "gru") return ModelKind::GRU;
    if (s == "gbt" || s == "xgb") return ModelKind::GBT;
    throw ModelError("unknown model kind '" + std::string(s) + "'");
}

using ModelConfig = std::variant<RecurrentConfig, TreeConfig>;

inline ModelKind kind_of(const ModelConfig& c) {
    if (const auto* r = std::get_if<RecurrentConfig>(&c)) {
        switch (r->cell) {
            case CellKind::LSTM: return ModelKind::LSTM;
            case CellKind::BiLSTM: return ModelKind::BiLSTM;
            case CellKind::GRU: return ModelKind::GRU;
        }
    }
    return ModelKind::GBT;
}

/// Size used to break validation ties: weights for recurrent nets, the
/// node budget (rounds * (2^(depth+1) - 1)) for boosted trees.
inline std::size_t parameter_count(const ModelConfig& c, std::size_t features) {
    if (const auto* r = std::get_if<RecurrentConfig>(&c)) {
        return RecurrentNet::parameter_count(r->cell, features, r->hidden_units);
    }
    const auto& t = std::get<TreeConfig>(c);
    return t.rounds * ((std::size_t{1} << (t.max_depth + 1)) - 1);
}

/// Row-flattened windows for the tree learner: m x (L * F).
inline Matrix flatten(const WindowedDataset& ds) {
    Matrix x(ds.size(), ds.window_length());
    std::copy(ds.windows.begin(), ds.windows.end(), x.data().begin());
    return x;
}

/// Fitted model on scaled data, without the scaling layer.
struct FittedModel {
    std::variant<RecurrentNet, BoostedTrees> model;
    std::vector<double> loss_trace;

    /// Predictions in scaled-target space.
    std::vector<double> predict(const WindowedDataset& scaled) const {
        if (const auto* net = std::get_if<RecurrentNet>(&model)) return net->predict(scaled);
        const auto& trees = std::get<BoostedTrees>(model);
        std::vector<double> out;
        out.reserve(scaled.size());
        for (std::size_t i = 0; i < scaled.size(); ++i) out.push_back(trees.predict(scaled.window(i)));
        return out;
    }
};

inline FittedModel fit_model(const WindowedDataset& scaled, const ModelConfig& config) {
    if (scaled.size() == 0) throw ModelError("cannot train on an empty dataset");
    if (const auto* r = std::get_if<RecurrentConfig>(&config)) {
        auto fit = train_recurrent(scaled, *r);
        return FittedModel{std::move(fit.net), std::move(fit.loss_trace)};
    }
    auto fit = train_gbt(flatten(scaled), scaled.targets, std::get<TreeConfig>(config));
    return FittedModel{std::move(fit.model), std::move(fit.loss_trace)};
}

/// A trained point forecaster together with the scaling it was trained
/// under. Inputs and outputs are in physical units.
struct Forecaster {
    ModelKind kind = ModelKind::LSTM;
    features::FeatureSpec spec;
    features::Scaler input_scaler;   ///< one entry per input channel
    features::Scaler target_scaler;  ///< single column
    ModelConfig config;
    FittedModel fitted;

    std::size_t lookback() const { return spec.lookback; }
    std::size_t input_count() const { return input_scaler.columns(); }
    const std::vector<double>& loss_trace() const { return fitted.loss_trace; }

    WindowedDataset scale(const WindowedDataset& raw) const {
        if (raw.features != input_count() || raw.lookback != lookback()) {
            throw ModelError("windows are " + std::to_string(raw.lookback) + "x" +
                             std::to_string(raw.features) + ", forecaster expects " +
                             std::to_string(lookback()) + "x" + std::to_string(input_count()));
        }
        WindowedDataset out = raw;
        for (std::size_t i = 0; i < out.windows.size(); ++i) {
            out.windows[i] = input_scaler.scale(i % raw.features, raw.windows[i]);
        }
        for (double& t : out.targets) t = std::isfinite(t) ? target_scaler.scale(0, t) : t;
        return out;
    }

    /// One prediction per window, each from that window alone.
    std::vector<double> predict(const WindowedDataset& raw) const {
        auto out = fitted.predict(scale(raw));
        for (double& v : out) v = target_scaler.unscale(0, v);
        return out;
    }

    double predict_one(std::span<const double> window) const {
        WindowedDataset one{lookback(), input_count(), {window.begin(), window.end()}, {0.0}, {}};
        return predict(one).front();
    }
};

/// Fits scalers on the training rows, windows the scaled series and trains.
inline Forecaster fit_forecaster(const features::FeatureTable& train, const features::FeatureSpec& spec,
                                 const ModelConfig& config) {
    Forecaster f;
    f.kind = kind_of(config);
    f.spec = spec;
    f.config = config;
    f.input_scaler = features::fit_scaler(train.x);
    f.target_scaler = features::fit_scaler(std::span<const double>(train.y));
    const Matrix xs = features::apply_scaler(f.input_scaler, train.x);
    std::vector<double> ys(train.y.size());
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = f.target_scaler.scale(0, train.y[i]);
    f.fitted = fit_model(make_windows(xs, ys, spec.lookback), config);
    return f;
}

/// How the target channel is filled inside the out-of-sample horizon.
enum class TargetFeed { Recursive, Simulated };

/// Blind multi-step forecast. `history` supplies the last L input rows
/// (exogenous columns then target, physical units). `exogenous` holds the
/// horizon's exogenous rows. The target channel inside the horizon comes
/// from the model's own previous outputs, or from `simulated_target` under
/// TargetFeed::Simulated. Horizon target values are never an input.
inline std::vector<double> forecast_blind(const Forecaster& f, const Matrix& history,
                                          const Matrix& exogenous, TargetFeed feed,
                                          std::span<const double> simulated_target = {}) {
    const std::size_t lookback = f.lookback();
    const std::size_t inputs = f.input_count();
    if (history.cols() != inputs) throw ModelError("history column count does not match forecaster");
    if (history.rows() < lookback) {
        throw ModelError("history has " + std::to_string(history.rows()) +
                         " rows; forecaster needs " + std::to_string(lookback) + " to warm up");
    }
    if (exogenous.cols() + 1 != inputs) throw ModelError("exogenous column count does not match forecaster");
    if (feed == TargetFeed::Simulated && simulated_target.size() != exogenous.rows()) {
        throw ModelError("simulated target feed needs one value per horizon row");
    }

    std::vector<double> buffer;
    buffer.reserve((lookback + exogenous.rows()) * inputs);
    for (std::size_t r = history.rows() - lookback; r < history.rows(); ++r) {
        const auto row = history.row(r);
        buffer.insert(buffer.end(), row.begin(), row.end());
    }
    std::vector<double> out;
    out.reserve(exogenous.rows());
    for (std::size_t j = 0; j < exogenous.rows(); ++j) {
        const std::span<const double> window(buffer.data() + j * inputs, lookback * inputs);
        const double y = f.predict_one(window);
        out.push_back(y);
        const auto exo = exogenous.row(j);
        buffer.insert(buffer.end(), exo.begin(), exo.end());
        buffer.push_back(feed == TargetFeed::Recursive ? y : simulated_target[j]);
    }
    return out;
}

/// Last observed value carried flat across the horizon.
inline std::vector<double> persistence_forecast(double last_observed, std::size_t horizon) {
    return std::vector<double>(horizon, last_observed);
}

struct LeaderboardEntry {
    std::size_t order = 0;  ///< position in the candidate list
    ModelConfig config;
    std::size_t parameters = 0;
    double validation_mae = std::numeric_limits<double>::infinity();
    bool diverged = false;
    std::string error;
};

struct SearchResult {
    ModelConfig best;
    std::vector<LeaderboardEntry> leaderboard;  ///< ranked, diverged entries last
};

/// Orders entries by validation MAE, then fewer parameters, then candidate order.
inline void rank_leaderboard(std::vector<LeaderboardEntry>& entries) {
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.diverged != b.diverged) return !a.diverged;
        if (a.validation_mae != b.validation_mae) return a.validation_mae < b.validation_mae;
        if (a.parameters != b.parameters) return a.parameters < b.parameters;
        return a.order < b.order;
    });
}

/// Trains each candidate on the leading windows and scores MAE on the last
/// `validation_fraction` of them (chronological). Candidates run on up to
/// `threads` workers; results do not depend on the thread count.
inline SearchResult grid_search(const WindowedDataset& scaled, std::span<const ModelConfig> candidates,
                                double validation_fraction, std::size_t threads = 1) {
    if (candidates.empty()) throw SearchError("no candidate configurations");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw SearchError("validation_fraction must be in (0, 1)");
    }
    const std::size_t m = scaled.size();
    const auto n_val = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(m)));
    if (n_val == 0 || n_val >= m) {
        throw SearchError("validation split of " + std::to_string(m) + " windows leaves an empty part");
    }
    const WindowedDataset fit_part = scaled.slice(0, m - n_val);
    const WindowedDataset val_part = scaled.slice(m - n_val, m);

    std::vector<LeaderboardEntry> entries(candidates.size());
    auto evaluate = [&](std::size_t i) {
        LeaderboardEntry& e = entries[i];
        e.order = i;
        e.config = candidates[i];
        e.parameters = parameter_count(candidates[i], scaled.features);
        try {
            const FittedModel fm = fit_model(fit_part, candidates[i]);
            const auto pred = fm.predict(val_part);
            double sum = 0.0;
            for (std::size_t k = 0; k < pred.size(); ++k) sum += std::abs(pred[k] - val_part.targets[k]);
            e.validation_mae = sum / static_cast<double>(pred.size());
            if (!std::isfinite(e.validation_mae)) {
                e.diverged = true;
                e.error = "non-finite validation error";
            }
        } catch (const TrainingError& err) {
            e.diverged = true;
            e.error = err.what();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, candidates.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < candidates.size(); ++i) evaluate(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < candidates.size(); i = next++) evaluate(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    rank_leaderboard(entries);
    if (entries.front().diverged) throw SearchError("every candidate configuration diverged");
    return SearchResult{entries.front().config, std::move(entries)};
}

/// Declared ranges for random search. Integer ranges are inclusive;
/// learning rates are drawn log-uniformly.
struct SearchSpace {
    ModelKind kind = ModelKind::LSTM;
    std::size_t hidden_min = 16, hidden_max = 64;
    double lr_min = 1e-3, lr_max = 3e-3;
    std::size_t epochs_min = 200, epochs_max = 200;
    std::size_t batch_min = 32, batch_max = 32;
    std::size_t rounds_min = 100, rounds_max = 300;
    std::size_t depth_min = 3, depth_max = 5;
    std::size_t min_leaf = 5;
};

inline std::vector<ModelConfig> sample_candidates(const SearchSpace& space, std::size_t count,
                                                  std::uint64_t seed) {
    Rng rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) {
        if (hi < lo) throw SearchError("search range has max < min");
        return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
    };
    auto log_uniform = [&](double lo, double hi) {
        if (!(lo > 0.0 && hi >= lo)) throw SearchError("learning-rate range must be positive and ordered");
        return std::exp(rng.uniform(std::log(lo), std::log(hi)));
    };
    std::vector<ModelConfig> out;
    for (std::size_t i = 0; i < count; ++i) {
        if (space.kind == ModelKind::GBT) {
            TreeConfig t;
            t.rounds = pick(space.rounds_min, space.rounds_max);
            t.max_depth = pick(space.depth_min, space.depth_max);
            t.learning_rate = std::min(1.0, log_uniform(space.lr_min, space.lr_max));
            t.min_samples_leaf = space.min_leaf;
            t.seed = seed;
            out.emplace_back(t);
        } else {
            RecurrentConfig r;
            r.cell = space.kind == ModelKind::GRU      ? CellKind::GRU
                     : space.kind == ModelKind::BiLSTM ? CellKind::BiLSTM
                                                       : CellKind::LSTM;
            r.hidden_units = pick(space.hidden_min, space.hidden_max);
            r.learning_rate = log_uniform(space.lr_min, space.lr_max);
            r.epochs = pick(space.epochs_min, space.epochs_max);
            r.batch_size = pick(space.batch_min, space.batch_max);
            r.seed = seed;
            out.emplace_back(r);
        }
    }
    return out;
}

}  // namespace wellcast::models
