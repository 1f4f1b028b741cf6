#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wellcast/models.hpp"
#include "wellcast/rng.hpp"
#include "wellcast/serialize.hpp"

using namespace wellcast;
using namespace wellcast::models;

namespace {

WindowedDataset random_windows(Rng& rng, std::size_t m, std::size_t lookback, std::size_t features) {
    WindowedDataset ds;
    ds.lookback = lookback;
    ds.features = features;
    ds.windows.resize(m * lookback * features);
    for (double& v : ds.windows) v = rng.normal();
    ds.targets.resize(m);
    for (double& t : ds.targets) t = rng.normal();
    return ds;
}

double max_gradient_error(CellKind cell, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t features = 1 + rng.below(3);
    const std::size_t hidden = 1 + rng.below(8);
    const std::size_t lookback = 1 + rng.below(3);
    const auto ds = random_windows(rng, 3, lookback, features);
    RecurrentNet net = RecurrentNet::initialized(cell, features, hidden, rng);
    // Nonzero biases so every parameter has a visible effect.
    for (double& p : net.parameters()) p += rng.uniform(-0.1, 0.1);

    std::vector<std::size_t> idx{0, 1, 2};
    std::vector<double> grad;
    net.loss_and_gradient(ds, idx, grad);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double& p = net.parameters()[i];
        const double saved = p;
        p = saved + h;
        const double up = net.loss(ds, idx);
        p = saved - h;
        const double down = net.loss(ds, idx);
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double err = std::abs(grad[i] - numeric) / std::max({std::abs(grad[i]), std::abs(numeric), 1e-6});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace

class GradientCheck : public ::testing::TestWithParam<CellKind> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        EXPECT_LT(max_gradient_error(GetParam(), seed), 1e-4) << "seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(Cells, GradientCheck,
                         ::testing::Values(CellKind::LSTM, CellKind::BiLSTM, CellKind::GRU),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Recurrent, ZeroNetworkOutputsZero) {
    for (CellKind cell : {CellKind::LSTM, CellKind::BiLSTM, CellKind::GRU}) {
        RecurrentNet net(cell, 2, 4);
        const std::vector<double> window{1, -2, 3, 0.5};
        EXPECT_EQ(net.forward(window, 2), 0.0);
    }
}

TEST(Recurrent, ParameterCounts) {
    EXPECT_EQ(RecurrentNet::parameter_count(CellKind::LSTM, 3, 8), 4u * 8 * (3 + 8 + 1) + 8 + 1);
    EXPECT_EQ(RecurrentNet::parameter_count(CellKind::BiLSTM, 3, 8), 2u * 4 * 8 * (3 + 8 + 1) + 16 + 1);
    EXPECT_EQ(RecurrentNet::parameter_count(CellKind::GRU, 3, 8), 3u * 8 * (3 + 8 + 1) + 8 + 1);
    RecurrentNet net(CellKind::GRU, 3, 8);
    EXPECT_THROW(net.set_parameters(std::vector<double>(5)), ModelError);
}

TEST(Recurrent, SaturatedGruIsFinite) {
    Rng rng(1);
    RecurrentNet net = RecurrentNet::initialized(CellKind::GRU, 2, 3, rng);
    auto p = net.parameters();
    // Push every bias far positive.
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += 50.0;
    const std::vector<double> window{1, 2, 3, 4};
    EXPECT_TRUE(std::isfinite(net.forward(window, 2)));
}

TEST(Recurrent, SeededOutputIsReproducible) {
    const std::vector<double> window{0.1, -0.2, 0.3, 0.4};
    double first = 0.0;
    for (int run = 0; run < 2; ++run) {
        Rng rng(42);
        const auto net = RecurrentNet::initialized(CellKind::LSTM, 2, 4, rng);
        const double y = net.forward(window, 2);
        if (run == 0) first = y;
        EXPECT_EQ(y, first);
    }
}

TEST(Recurrent, ShapeMismatchIsModelError) {
    RecurrentNet net(CellKind::LSTM, 2, 3);
    Rng rng(2);
    const auto ds = random_windows(rng, 4, 3, 3);
    EXPECT_THROW(net.predict(ds), ModelError);
}

TEST(TrainRecurrent, ConstantZeroTarget) {
    Rng rng(4);
    auto ds = random_windows(rng, 64, 4, 2);
    std::fill(ds.targets.begin(), ds.targets.end(), 0.0);
    RecurrentConfig cfg{CellKind::LSTM, 8, 50, 1e-2, 16, 42, 0};
    const auto fit = train_recurrent(ds, cfg);
    ASSERT_EQ(fit.loss_trace.size(), 50u);
    EXPECT_LT(fit.loss_trace.back(), 1e-3);
    for (double y : fit.net.predict(ds)) EXPECT_NEAR(y, 0.0, 0.1);
}

TEST(TrainRecurrent, GruDescendsOnSine) {
    const std::size_t n = 230, lookback = 30;
    Matrix x(n, 2);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) {
        x(t, 0) = std::sin(0.1 * static_cast<double>(t));
        y[t] = std::sin(0.1 * static_cast<double>(t) + 0.5);
        x(t, 1) = y[t];
    }
    const auto ds = make_windows(x, y, lookback);
    ASSERT_EQ(ds.size(), 200u);
    const auto fit = train_recurrent(ds, RecurrentConfig{CellKind::GRU, 8, 200, 3e-3, 32, 42, 0});
    EXPECT_LT(fit.loss_trace.back(), fit.loss_trace.front());
}

TEST(TrainRecurrent, DeterministicTrace) {
    Rng rng(6);
    const auto ds = random_windows(rng, 40, 3, 2);
    for (CellKind cell : {CellKind::LSTM, CellKind::BiLSTM, CellKind::GRU}) {
        const RecurrentConfig cfg{cell, 4, 10, 1e-2, 8, 99, 0};
        const auto a = train_recurrent(ds, cfg);
        const auto b = train_recurrent(ds, cfg);
        EXPECT_EQ(a.loss_trace, b.loss_trace);
        EXPECT_TRUE(std::equal(a.net.parameters().begin(), a.net.parameters().end(), b.net.parameters().begin()));
    }
}

TEST(TrainRecurrent, DivergenceReportsEpoch) {
    Rng rng(8);
    auto ds = random_windows(rng, 8, 2, 1);
    for (double& t : ds.targets) t = 1e200;
    try {
        train_recurrent(ds, RecurrentConfig{CellKind::LSTM, 2, 5, 1e-3, 4, 1, 0});
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_EQ(e.epoch(), 0u);
    }
}

TEST(TrainRecurrent, PatienceStopsEarly) {
    Rng rng(10);
    auto ds = random_windows(rng, 16, 2, 1);
    std::fill(ds.targets.begin(), ds.targets.end(), 0.0);
    const auto fit = train_recurrent(ds, RecurrentConfig{CellKind::GRU, 2, 500, 0.3, 16, 1, 3});
    EXPECT_LT(fit.loss_trace.size(), 500u);
}

TEST(Recurrent, PredictionsIndependentOfWindowOrder) {
    Rng rng(12);
    const auto ds = random_windows(rng, 20, 4, 3);
    const auto net = RecurrentNet::initialized(CellKind::BiLSTM, 3, 5, rng);
    const auto base = net.predict(ds);
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const auto shuffled = net.predict(ds.select(order));
    for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(shuffled[i], base[order[i]]);
}

TEST(Gbt, StumpOracle) {
    Matrix x(4, 1);
    const double xs[] = {0, 0, 1, 1};
    for (std::size_t i = 0; i < 4; ++i) x(i, 0) = xs[i];
    const std::vector<double> y{0, 0, 2, 2};
    const auto fit = train_gbt(x, y, TreeConfig{1, 1, 1.0, 1, 42});
    EXPECT_EQ(fit.model.base, 1.0);
    ASSERT_EQ(fit.model.trees.size(), 1u);
    const auto& root = fit.model.trees[0].nodes[0];
    EXPECT_EQ(root.feature, 0);
    EXPECT_EQ(root.threshold, 0.5);
    for (std::size_t i = 0; i < 4; ++i) {
        const double row[] = {xs[i]};
        EXPECT_EQ(fit.model.predict(row), y[i]);
    }
    EXPECT_EQ(fit.loss_trace.back(), 0.0);
}

TEST(Gbt, ConstantTarget) {
    Rng rng(3);
    Matrix x(30, 2);
    for (std::size_t r = 0; r < 30; ++r) {
        x(r, 0) = rng.normal();
        x(r, 1) = rng.normal();
    }
    const std::vector<double> y(30, 0.7);
    const auto fit = train_gbt(x, y, TreeConfig{20, 3, 0.3, 2, 1});
    for (std::size_t r = 0; r < 30; ++r) EXPECT_EQ(fit.model.predict(x.row(r)), 0.7);
}

TEST(Gbt, ZeroRoundsPredictsMean) {
    Matrix x(4, 1);
    for (std::size_t r = 0; r < 4; ++r) x(r, 0) = static_cast<double>(r);
    const std::vector<double> y{1, 2, 3, 6};
    const auto fit = train_gbt(x, y, TreeConfig{0, 3, 0.1, 1, 1});
    for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(fit.model.predict(x.row(r)), 3.0);
}

TEST(Gbt, MseNonIncreasing) {
    Rng rng(17);
    Matrix x(200, 3);
    std::vector<double> y(200);
    for (std::size_t r = 0; r < 200; ++r) {
        for (std::size_t c = 0; c < 3; ++c) x(r, c) = rng.uniform(-2, 2);
        y[r] = std::sin(x(r, 0)) + x(r, 1) * x(r, 2) + rng.normal(0.0, 0.1);
    }
    const auto fit = train_gbt(x, y, TreeConfig{300, 3, 0.1, 5, 1});
    ASSERT_EQ(fit.loss_trace.size(), 300u);
    for (std::size_t i = 1; i < 300; ++i) EXPECT_LE(fit.loss_trace[i], fit.loss_trace[i - 1]) << "round " << i;
}

TEST(Gbt, Errors) {
    EXPECT_THROW(train_gbt(Matrix(0, 1), std::vector<double>{}, TreeConfig{}), ModelError);
    Matrix x(20, 2);
    const std::vector<double> y(20, 1.0);
    const auto fit = train_gbt(x, y, TreeConfig{1, 1, 0.1, 1, 1});
    const double wrong[] = {1.0};
    EXPECT_THROW(fit.model.predict(wrong), ModelError);
    EXPECT_THROW(train_gbt(x, y, TreeConfig{1, 1, 1.5, 1, 1}), ModelError);
}

TEST(Leaderboard, LowerMaeWins) {
    std::vector<LeaderboardEntry> e(2);
    e[0].order = 0;
    e[0].validation_mae = 2.0;
    e[1].order = 1;
    e[1].validation_mae = 1.0;
    rank_leaderboard(e);
    EXPECT_EQ(e.front().order, 1u);
}

TEST(Leaderboard, TieGoesToFewerParameters) {
    std::vector<LeaderboardEntry> e(2);
    const ModelConfig big = RecurrentConfig{CellKind::LSTM, 16};
    const ModelConfig small = RecurrentConfig{CellKind::LSTM, 8};
    e[0] = {0, big, parameter_count(big, 4), 1.5, false, {}};
    e[1] = {1, small, parameter_count(small, 4), 1.5, false, {}};
    rank_leaderboard(e);
    EXPECT_EQ(std::get<RecurrentConfig>(e.front().config).hidden_units, 8u);
}

TEST(GridSearch, SingleCandidate) {
    Rng rng(19);
    const auto ds = random_windows(rng, 30, 3, 2);
    const std::vector<ModelConfig> one{TreeConfig{5, 2, 0.1, 2, 1}};
    const auto r = grid_search(ds, one, 0.2);
    EXPECT_EQ(r.leaderboard.size(), 1u);
    EXPECT_TRUE(std::holds_alternative<TreeConfig>(r.best));
}

TEST(GridSearch, AllDivergedIsSearchError) {
    Rng rng(20);
    auto ds = random_windows(rng, 20, 2, 1);
    for (double& t : ds.targets) t = 1e200;
    const std::vector<ModelConfig> c{RecurrentConfig{CellKind::GRU, 2, 2, 1e-3, 4, 1, 0}};
    EXPECT_THROW(grid_search(ds, c, 0.25), SearchError);
}

TEST(GridSearch, ThreadCountDoesNotChangeResult) {
    Rng rng(23);
    const auto ds = random_windows(rng, 60, 3, 2);
    std::vector<ModelConfig> c;
    for (std::size_t h : {2u, 3u, 4u}) c.emplace_back(RecurrentConfig{CellKind::LSTM, h, 3, 1e-2, 16, 5, 0});
    c.emplace_back(TreeConfig{10, 2, 0.1, 3, 1});
    const auto a = grid_search(ds, c, 0.2, 1);
    const auto b = grid_search(ds, c, 0.2, 3);
    ASSERT_EQ(a.leaderboard.size(), b.leaderboard.size());
    for (std::size_t i = 0; i < a.leaderboard.size(); ++i) {
        EXPECT_EQ(a.leaderboard[i].order, b.leaderboard[i].order);
        EXPECT_EQ(a.leaderboard[i].validation_mae, b.leaderboard[i].validation_mae);
    }
}

TEST(GridSearch, AffineInputRescalingKeepsSelection) {
    Rng rng(29);
    const std::size_t n = 120;
    Matrix x(n, 2), x2(n, 2);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) {
        x(t, 0) = rng.uniform(0, 10);
        y[t] = 3.0 * x(t, 0) + rng.normal();
        x(t, 1) = y[t];
        x2(t, 0) = 250.0 * x(t, 0) - 40.0;
        x2(t, 1) = x(t, 1);
    }
    auto scaled = [&](const Matrix& m) {
        return make_windows(features::apply_scaler(features::fit_scaler(m), m), y, 5);
    };
    std::vector<ModelConfig> c;
    for (std::size_t d : {1u, 2u, 3u}) c.emplace_back(TreeConfig{20, d, 0.2, 3, 1});
    const auto a = grid_search(scaled(x), c, 0.25);
    const auto b = grid_search(scaled(x2), c, 0.25);
    EXPECT_EQ(a.leaderboard.front().order, b.leaderboard.front().order);
}

TEST(SampleCandidates, WithinRangesAndSeeded) {
    SearchSpace space;
    space.hidden_min = 4;
    space.hidden_max = 12;
    space.lr_min = 1e-4;
    space.lr_max = 1e-2;
    const auto a = sample_candidates(space, 20, 7);
    EXPECT_EQ(a.size(), 20u);
    for (const auto& c : a) {
        const auto& r = std::get<RecurrentConfig>(c);
        EXPECT_GE(r.hidden_units, 4u);
        EXPECT_LE(r.hidden_units, 12u);
        EXPECT_GE(r.learning_rate, 1e-4 * (1 - 1e-12));
        EXPECT_LE(r.learning_rate, 1e-2 * (1 + 1e-12));
    }
    const auto b = sample_candidates(space, 20, 7);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]);
}

namespace {

features::FeatureTable sine_table(std::size_t n) {
    features::FeatureTable t{Matrix(n, 2), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        t.x(i, 0) = std::cos(0.2 * static_cast<double>(i));
        t.y[i] = 100.0 + 10.0 * std::sin(0.2 * static_cast<double>(i));
        t.x(i, 1) = t.y[i];
    }
    return t;
}

}  // namespace

TEST(Forecaster, SerializationRoundTrip) {
    const features::FeatureSpec spec{"OPR_H", {"BHP_H"}, 5};
    const auto table = sine_table(80);
    const auto windows = make_windows(table.x, table.y, 5);
    for (const ModelConfig& cfg : {ModelConfig{RecurrentConfig{CellKind::BiLSTM, 3, 5, 1e-2, 16, 1, 0}},
                                   ModelConfig{RecurrentConfig{CellKind::GRU, 3, 5, 1e-2, 16, 1, 0}},
                                   ModelConfig{TreeConfig{15, 3, 0.2, 3, 1}}}) {
        const Forecaster f = fit_forecaster(table, spec, cfg);
        const std::string text = forecaster_to_json(f).dump();
        const Forecaster g = forecaster_from_json(json::parse(text));
        EXPECT_EQ(f.predict(windows), g.predict(windows));
        EXPECT_EQ(g.loss_trace(), f.loss_trace());
        EXPECT_EQ(forecaster_to_json(g).dump(), text);
    }
}

TEST(Forecaster, RejectsForeignDocument) {
    EXPECT_THROW(forecaster_from_json(json{{"format", "other"}}), ModelError);
}

TEST(Forecaster, LossTraceLengthMatchesBudget) {
    const features::FeatureSpec spec{"OPR_H", {"BHP_H"}, 5};
    const auto table = sine_table(60);
    EXPECT_EQ(fit_forecaster(table, spec, RecurrentConfig{CellKind::LSTM, 3, 7, 1e-2, 16, 1, 0}).loss_trace().size(), 7u);
    EXPECT_EQ(fit_forecaster(table, spec, TreeConfig{9, 2, 0.2, 3, 1}).loss_trace().size(), 9u);
}

TEST(ForecastBlind, ShapeAndFeeds) {
    const features::FeatureSpec spec{"OPR_H", {"BHP_H"}, 5};
    const auto table = sine_table(80);
    const Forecaster f = fit_forecaster(table, spec, TreeConfig{20, 2, 0.3, 3, 1});
    Matrix exo(12, 1);
    std::vector<double> sim(12);
    for (std::size_t j = 0; j < 12; ++j) {
        exo(j, 0) = std::cos(0.2 * static_cast<double>(80 + j));
        sim[j] = 100.0;
    }
    const auto rec = forecast_blind(f, table.x, exo, TargetFeed::Recursive);
    const auto fed = forecast_blind(f, table.x, exo, TargetFeed::Simulated, sim);
    EXPECT_EQ(rec.size(), 12u);
    EXPECT_EQ(fed.size(), 12u);
    // The first step sees only history, so both feeds agree on it.
    EXPECT_EQ(rec.front(), fed.front());
    EXPECT_THROW(forecast_blind(f, table.x, exo, TargetFeed::Simulated, std::vector<double>(3)), ModelError);
    EXPECT_THROW(forecast_blind(f, Matrix(3, 2), exo, TargetFeed::Recursive), ModelError);
}

TEST(Persistence, Flat) {
    EXPECT_EQ(persistence_forecast(4.5, 3), (std::vector<double>{4.5, 4.5, 4.5}));
}
