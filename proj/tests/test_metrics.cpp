#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wellcast/metrics.hpp"
#include "wellcast/rng.hpp"
#include "wellcast/serialize.hpp"

using namespace wellcast;
using namespace wellcast::metrics;
using V = std::vector<double>;

TEST(Metrics, MaeRmse) {
    const V y{1, 2, 3};
    EXPECT_EQ(mae(y, y), 0.0);
    EXPECT_EQ(rmse(y, y), 0.0);
    EXPECT_EQ(mae(V{0, 0}, V{1, 3}), 2.0);
    EXPECT_NEAR(rmse(V{0, 0}, V{3, 4}), std::sqrt(12.5), 1e-15);
    EXPECT_NEAR(rmse(V{0, 0}, V{3, 4}), 3.5355, 1e-4);
}

TEST(Metrics, Smape) {
    EXPECT_EQ(smape(V{100}, V{100}), 0.0);
    EXPECT_NEAR(smape(V{100}, V{50}), 66.67, 5e-3);
    EXPECT_EQ(smape(V{0}, V{0}), 0.0);
    EXPECT_EQ(smape(V{0}, V{5}), 200.0);
}

TEST(Metrics, Bias) {
    EXPECT_EQ(forecast_bias(V{1, 2, 3}, V{2, 2, 2}), 0.0);
    EXPECT_EQ(forecast_bias(V{10, 10}, V{8, 8}), 2.0);
    EXPECT_EQ(forecast_bias(V{4, 5}, V{4, 5}), 0.0);
}

TEST(Metrics, Pda) {
    EXPECT_EQ(pda(V{1, 2, 1, 2}, V{0, 1, 0, 1}), 100.0);
    EXPECT_EQ(pda(V{1, 2}, V{2, 1}), 0.0);
    EXPECT_EQ(pda(V{1, 1}, V{1, 1}), 100.0);
    EXPECT_THROW(pda(V{1}, V{1}), MetricError);
}

TEST(Metrics, Errors) {
    EXPECT_THROW(mae(V{1}, V{1, 2}), MetricError);
    EXPECT_THROW(rmse(V{}, V{}), MetricError);
    EXPECT_THROW(smape(V{1}, V{}), MetricError);
    EXPECT_THROW(forecast_bias(V{1, 2}, V{1}), MetricError);
    EXPECT_THROW(metric_report(V{1, 2}, V{1}, DatasetTag::Test), MetricError);
}

TEST(Report, PerfectPredictions) {
    const V y{3, 1, 4, 1, 5};
    const auto r = metric_report(y, y, DatasetTag::Forecast);
    EXPECT_EQ(r.mae, 0.0);
    EXPECT_EQ(r.rmse, 0.0);
    EXPECT_EQ(r.smape, 0.0);
    EXPECT_EQ(r.forecast_bias, 0.0);
    EXPECT_EQ(r.pda, 100.0);
    EXPECT_EQ(r.n, 5u);
}

TEST(Report, JsonRoundTripFixture) {
    MetricReport r{19.468, 24.195, 6.943, -12.295, 13.225, 120, DatasetTag::Test};
    const auto back = json::parse(json(r).dump()).get<MetricReport>();
    EXPECT_EQ(back.mae, 19.468);
    EXPECT_EQ(back.rmse, 24.195);
    EXPECT_EQ(back.smape, 6.943);
    EXPECT_EQ(back.forecast_bias, -12.295);
    EXPECT_EQ(back.pda, 13.225);
    EXPECT_EQ(back.tag, DatasetTag::Test);
    EXPECT_EQ(parse_tag("simulated-vs-actual"), DatasetTag::SimulatedVsActual);
    EXPECT_THROW(parse_tag("train"), MetricError);
}

TEST(Properties, Identities) {
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        V y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(-100, 100);
            p[i] = rng.uniform(-100, 100);
        }
        EXPECT_GE(rmse(y, p), mae(y, p));
        EXPECT_EQ(forecast_bias(y, p), -forecast_bias(p, y));
        const double s = smape(y, p);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 200.0);
        EXPECT_EQ(s, smape(p, y));
    }
}

TEST(Properties, ReorderingAffectsOnlyPda) {
    const V y{1, 5, 2, 8, 3, 9}, p{2, 4, 3, 6, 1, 7};
    std::vector<std::size_t> order{5, 0, 3, 1, 4, 2};
    V yr, pr;
    for (std::size_t i : order) {
        yr.push_back(y[i]);
        pr.push_back(p[i]);
    }
    EXPECT_NEAR(mae(y, p), mae(yr, pr), 1e-12);
    EXPECT_NEAR(rmse(y, p), rmse(yr, pr), 1e-12);
    EXPECT_NEAR(smape(y, p), smape(yr, pr), 1e-12);
    EXPECT_NEAR(forecast_bias(y, p), forecast_bias(yr, pr), 1e-12);
    EXPECT_NE(pda(y, p), pda(yr, pr));
}

TEST(Properties, Scaling) {
    Rng rng(5);
    V y(50), p(50);
    for (std::size_t i = 0; i < 50; ++i) {
        y[i] = rng.uniform(1, 100);
        p[i] = rng.uniform(1, 100);
    }
    for (double c : {0.5, 3.0, 1000.0}) {
        V ys = y, ps = p;
        for (auto& v : ys) v *= c;
        for (auto& v : ps) v *= c;
        EXPECT_NEAR(mae(ys, ps), c * mae(y, p), 1e-9 * c * mae(y, p));
        EXPECT_NEAR(rmse(ys, ps), c * rmse(y, p), 1e-9 * c * rmse(y, p));
        EXPECT_NEAR(smape(ys, ps), smape(y, p), 1e-9);
        EXPECT_EQ(pda(ys, ps), pda(y, p));
    }
}
