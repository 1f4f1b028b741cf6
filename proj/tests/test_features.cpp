#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "wellcast/features.hpp"
#include "wellcast/rng.hpp"
#include "wellcast/windows.hpp"

using namespace wellcast;
using namespace wellcast::features;

TEST(ProductivityIndex, Substitution) {
    const auto pi = productivity_index({100.0, 4931.3, 4431.3});
    EXPECT_NEAR(pi.value, 0.2, 1e-15);
    EXPECT_FALSE(pi.injection);
    EXPECT_EQ(productivity_index({0.0, 4931.3, 1000.0}).value, 0.0);
    EXPECT_THROW(productivity_index({5.0, 3000.0, 3000.0}), DomainError);
}

TEST(ProductivityIndex, InjectionFlag) {
    const auto pi = productivity_index({10.0, 1000.0, 1100.0});
    EXPECT_TRUE(pi.injection);
    EXPECT_DOUBLE_EQ(pi.value, -0.1);
}

TEST(ProductivityIndex, LinearInRate) {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double q = rng.uniform(0.0, 1000.0), a = rng.uniform(0.1, 10.0);
        const double p_res = rng.uniform(2000.0, 5000.0), p_wf = rng.uniform(0.0, 1900.0);
        EXPECT_NEAR(productivity_index({a * q, p_res, p_wf}).value, a * productivity_index({q, p_res, p_wf}).value,
                    1e-12 * a * q);
    }
}

TEST(Wiggins, OilValues) {
    EXPECT_EQ(wiggins_oil_ratio(0.0, 4931.3), 1.0);
    EXPECT_EQ(wiggins_oil_ratio(4931.3, 4931.3), 0.0);
    EXPECT_NEAR(wiggins_oil_ratio(50.0, 100.0), 0.62, 1e-15);
}

TEST(Wiggins, WaterValues) {
    EXPECT_EQ(wiggins_water_ratio(0.0, 4931.3), 1.0);
    EXPECT_EQ(wiggins_water_ratio(4931.3, 4931.3), 0.0);
    EXPECT_NEAR(wiggins_water_ratio(50.0, 100.0), 0.57, 1e-15);
}

TEST(Wiggins, DomainErrors) {
    EXPECT_THROW(wiggins_oil_ratio(-1.0, 100.0), DomainError);
    EXPECT_THROW(wiggins_oil_ratio(101.0, 100.0), DomainError);
    EXPECT_THROW(wiggins_water_ratio(10.0, 0.0), DomainError);
}

TEST(Wiggins, MonotoneAndBounded) {
    double prev_o = 2.0, prev_w = 2.0;
    for (int i = 0; i <= 1000; ++i) {
        const double o = wiggins_oil_ratio(i, 1000.0), w = wiggins_water_ratio(i, 1000.0);
        EXPECT_LT(o, prev_o);
        EXPECT_LT(w, prev_w);
        EXPECT_GE(o, 0.0);
        EXPECT_LE(o, 1.0);
        EXPECT_GE(w, 0.0);
        EXPECT_LE(w, 1.0);
        prev_o = o;
        prev_w = w;
    }
}

namespace {

SeriesFrame frame5() {
    std::vector<Date> idx;
    for (int i = 0; i < 5; ++i) idx.push_back(Date::from_ymd(2020, 1, 1) + i);
    SeriesFrame f(idx);
    f.add_column("OPR_H", std::vector<double>{1, 2, 3, 4, 5});
    f.add_column("WPR_H", std::vector<double>{5, 4, 3, 2, 1});
    f.add_column("BHP_H", std::vector<double>{9, 9, 8, 8, 7});
    return f;
}

}  // namespace

TEST(SelectFeatures, Shape) {
    FeatureSpec spec{"OPR_H", {"WPR_H", "BHP_H"}, 2};
    const auto t = select_features(frame5(), spec);
    EXPECT_EQ(t.x.rows(), 5u);
    EXPECT_EQ(t.x.cols(), 3u);
    EXPECT_EQ(t.y.size(), 5u);
    EXPECT_EQ(t.x(1, 0), 4.0);   // WPR_H
    EXPECT_EQ(t.x(1, 2), 2.0);   // lagged target channel
}

TEST(SelectFeatures, EmptyExogenous) {
    FeatureSpec spec{"OPR_H", {}, 2};
    const auto t = select_features(frame5(), spec);
    EXPECT_EQ(t.x.cols(), 1u);
}

TEST(SelectFeatures, Errors) {
    EXPECT_THROW(select_features(frame5(), FeatureSpec{"OPR_H", {"OPR_H"}, 2}), FeatureError);
    EXPECT_THROW(select_features(frame5(), FeatureSpec{"OPR_H", {"GPR_H"}, 2}), FeatureError);
}

TEST(Scaler, Substitution) {
    const std::vector<double> col{0.0, 10.0};
    const auto s = fit_scaler(std::span<const double>(col));
    EXPECT_EQ(s.mean[0], 5.0);
    EXPECT_EQ(s.std[0], 5.0);
    EXPECT_EQ(s.scale(0, 10.0), 1.0);
    EXPECT_EQ(s.unscale(0, 1.0), 10.0);
}

TEST(Scaler, ConstantColumnRejected) {
    const std::vector<double> col{3.0, 3.0, 3.0};
    EXPECT_THROW(fit_scaler(std::span<const double>(col)), ScalerError);
}

TEST(Scaler, StandardizesTrainingData) {
    Rng rng(11);
    Matrix x(200, 3);
    for (std::size_t r = 0; r < 200; ++r) {
        x(r, 0) = rng.normal(100.0, 30.0);
        x(r, 1) = rng.uniform(-1e4, 1e4);
        x(r, 2) = std::exp(rng.normal());
    }
    const auto s = fit_scaler(x);
    const Matrix z = apply_scaler(s, x);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t r = 0; r < 200; ++r) mean += z(r, c);
        mean /= 200.0;
        for (std::size_t r = 0; r < 200; ++r) sq += (z(r, c) - mean) * (z(r, c) - mean);
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(std::sqrt(sq / 200.0), 1.0, 1e-9);
    }
}

TEST(Scaler, AffineOnNewData) {
    const std::vector<double> col{1.0, 2.0, 4.0};
    const auto s = fit_scaler(std::span<const double>(col));
    const double a = s.scale(0, 10.0), b = s.scale(0, 20.0), c = s.scale(0, 30.0);
    EXPECT_NEAR(b - a, c - b, 1e-12);
}

TEST(PhysicsColumns, Added) {
    auto f = frame5();
    f.add_column("BHP", std::vector<double>{50, 60, 70, 80, 90});
    const auto out = add_physics_columns(f, "OPR_H", "BHP", 100.0);
    EXPECT_TRUE(out.has("PI"));
    EXPECT_DOUBLE_EQ(*out.column("PI").values[0], 1.0 / 50.0);
    EXPECT_NEAR(*out.column("IPR_OIL").values[0], 0.62, 1e-15);
}

TEST(Windows, Counts) {
    Matrix x(10, 3);
    std::vector<double> y(10);
    for (std::size_t r = 0; r < 10; ++r) {
        y[r] = static_cast<double>(r);
        for (std::size_t c = 0; c < 3; ++c) x(r, c) = static_cast<double>(10 * r + c);
    }
    const auto ds = models::make_windows(x, y, 3);
    EXPECT_EQ(ds.size(), 7u);
    EXPECT_EQ(ds.windows.size(), 7u * 3u * 3u);
    EXPECT_EQ(ds.targets.size(), 7u);
    // Window t covers rows [t, t+3) and targets row t+3.
    EXPECT_EQ(ds.at(2, 0, 1), 21.0);
    EXPECT_EQ(ds.at(2, 2, 2), 42.0);
    EXPECT_EQ(ds.targets[2], 5.0);

    Matrix x4(4, 1);
    std::vector<double> y4{1, 2, 3, 4};
    EXPECT_EQ(models::make_windows(x4, y4, 3).size(), 1u);
    Matrix x3(3, 1);
    std::vector<double> y3{1, 2, 3};
    EXPECT_THROW(models::make_windows(x3, y3, 3), WindowingError);
}
