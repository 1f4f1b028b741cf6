#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "wellcast/error.hpp"
#include "wellcast/rng.hpp"
#include "wellcast/windows.hpp"

namespace wellcast::models {

enum class CellKind { LSTM, BiLSTM, GRU };

inline std::string_view to_string(CellKind c) {
    switch (c) {
        case CellKind::LSTM: return "lstm";
        case CellKind::BiLSTM: return "bilstm";
        case CellKind::GRU: return "gru";
    }
    return "?";
}

struct RecurrentConfig {
    CellKind cell = CellKind::LSTM;
    std::size_t hidden_units = 16;
    std::size_t epochs = 200;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    /// Stop after this many epochs without a lower training loss; 0 = never.
    std::size_t patience = 0;

    void validate() const {
        if (hidden_units == 0 || epochs == 0 || batch_size == 0 || !(learning_rate > 0.0)) {
            throw ModelError("recurrent config values must be positive");
        }
    }

    bool operator==(const RecurrentConfig&) const = default;
};

/// A single-layer recurrent cell (or a forward/backward LSTM pair) with a
/// linear head on the final hidden state. All weights live in one flat
/// vector: per direction W (G*H x F), U (G*H x H), b (G*H), all row-major,
/// then the head weights (D*H) and the head bias. Gate order is
/// input, forget, candidate, output for LSTM and update, reset, candidate
/// for GRU.
class RecurrentNet {
public:
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    RecurrentNet() = default;
    RecurrentNet(CellKind cell, std::size_t features, std::size_t hidden)
        : cell_(cell), features_(features), hidden_(hidden) {
        if (features == 0 || hidden == 0) throw ModelError("recurrent net needs features and hidden units");
        params_.assign(parameter_count(cell, features, hidden), 0.0);
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, LSTM
    /// forget-gate bias 1.
    static RecurrentNet initialized(CellKind cell, std::size_t features, std::size_t hidden, Rng& rng) {
        RecurrentNet net(cell, features, hidden);
        const std::size_t g = net.gates();
        const double a = 1.0 / std::sqrt(static_cast<double>(features + hidden));
        for (std::size_t d = 0; d < net.directions(); ++d) {
            double* p = net.params_.data() + d * net.block_size();
            for (std::size_t i = 0; i < g * hidden * (features + hidden); ++i) p[i] = rng.uniform(-a, a);
            if (cell != CellKind::GRU) {
                double* b = p + g * hidden * (features + hidden);
                for (std::size_t i = 0; i < hidden; ++i) b[hidden + i] = 1.0;
            }
        }
        const double ah = 1.0 / std::sqrt(static_cast<double>(net.directions() * hidden));
        double* head = net.params_.data() + net.head_offset();
        for (std::size_t i = 0; i < net.directions() * hidden; ++i) head[i] = rng.uniform(-ah, ah);
        return net;
    }

    static std::size_t parameter_count(CellKind cell, std::size_t features, std::size_t hidden) {
        const std::size_t g = cell == CellKind::GRU ? 3 : 4;
        const std::size_t dirs = cell == CellKind::BiLSTM ? 2 : 1;
        return dirs * g * hidden * (features + hidden + 1) + dirs * hidden + 1;
    }

    CellKind cell() const noexcept { return cell_; }
    std::size_t features() const noexcept { return features_; }
    std::size_t hidden() const noexcept { return hidden_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    void set_parameters(std::vector<double> p) {
        if (p.size() != params_.size()) {
            throw ModelError("parameter vector has " + std::to_string(p.size()) + " entries, expected " +
                             std::to_string(params_.size()));
        }
        params_ = std::move(p);
    }

    /// Scalar output for one window laid out as L x F.
    double forward(std::span<const double> window, std::size_t lookback) const {
        if (window.size() != lookback * features_) {
            throw ModelError("window has " + std::to_string(window.size()) + " values, expected " +
                             std::to_string(lookback * features_));
        }
        WindowedDataset one{lookback, features_, {window.begin(), window.end()}, {0.0}, {}};
        const std::size_t idx = 0;
        return predict(one, std::span<const std::size_t>(&idx, 1)).front();
    }

    /// Outputs for the selected windows, in scaled-target space.
    std::vector<double> predict(const WindowedDataset& ds, std::span<const std::size_t> idx) const {
        check(ds);
        std::vector<double> out;
        out.reserve(idx.size());
        constexpr std::size_t chunk = 256;
        for (std::size_t start = 0; start < idx.size(); start += chunk) {
            const auto part = idx.subspan(start, std::min(chunk, idx.size() - start));
            Pass pass = run_forward(ds, part);
            for (Eigen::Index b = 0; b < pass.yhat.cols(); ++b) out.push_back(pass.yhat(0, b));
        }
        return out;
    }

    std::vector<double> predict(const WindowedDataset& ds) const {
        std::vector<std::size_t> idx(ds.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return predict(ds, idx);
    }

    /// Mean squared error over the selected windows.
    double loss(const WindowedDataset& ds, std::span<const std::size_t> idx) const {
        const auto yhat = predict(ds, idx);
        double sum = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double e = yhat[i] - ds.targets[idx[i]];
            sum += e * e;
        }
        return sum / static_cast<double>(idx.size());
    }

    /// Mean squared error over the batch and its gradient with respect to
    /// every parameter, by backpropagation through time.
    double loss_and_gradient(const WindowedDataset& ds, std::span<const std::size_t> idx,
                             std::vector<double>& grad) const {
        check(ds);
        grad.assign(params_.size(), 0.0);
        const Pass pass = run_forward(ds, idx);
        const auto batch = static_cast<Eigen::Index>(idx.size());
        Eigen::RowVectorXd err(batch);
        for (Eigen::Index b = 0; b < batch; ++b) err(b) = pass.yhat(0, b) - ds.targets[idx[static_cast<std::size_t>(b)]];
        const double loss = err.squaredNorm() / static_cast<double>(batch);
        const Eigen::RowVectorXd dy = err * (2.0 / static_cast<double>(batch));

        const auto hd = static_cast<Eigen::Index>(hidden_);
        const auto dirs = static_cast<Eigen::Index>(directions());
        Eigen::Map<const Eigen::VectorXd> head_w(params_.data() + head_offset(), dirs * hd);
        Eigen::Map<Eigen::VectorXd> g_head_w(grad.data() + head_offset(), dirs * hd);
        g_head_w.noalias() = pass.final_state * dy.transpose();
        grad[head_offset() + static_cast<std::size_t>(dirs * hd)] = dy.sum();
        const Eigen::MatrixXd d_state = head_w * dy;

        for (std::size_t d = 0; d < directions(); ++d) {
            const Eigen::MatrixXd dh = d_state.middleRows(static_cast<Eigen::Index>(d) * hd, hd);
            const double* p = params_.data() + d * block_size();
            double* g = grad.data() + d * block_size();
            if (cell_ == CellKind::GRU) {
                backward_gru(pass.dirs[d], dh, p, g);
            } else {
                backward_lstm(pass.dirs[d], dh, p, g);
            }
        }
        return loss;
    }

    std::size_t gates() const noexcept { return cell_ == CellKind::GRU ? 3 : 4; }
    std::size_t directions() const noexcept { return cell_ == CellKind::BiLSTM ? 2 : 1; }

private:
    struct DirectionCache {
        std::vector<Eigen::MatrixXd> act;  // activated gates, G*H x B, per processing step
        std::vector<Eigen::MatrixXd> c;    // LSTM cell state, H x B
        std::vector<Eigen::MatrixXd> h;    // hidden state, H x B
        const std::vector<Eigen::MatrixXd>* xs = nullptr;
        bool reversed = false;
    };

    struct Pass {
        std::vector<Eigen::MatrixXd> xs;  // per time step, F x B
        std::vector<DirectionCache> dirs;
        Eigen::MatrixXd final_state;      // D*H x B
        Eigen::MatrixXd yhat;             // 1 x B
    };

    std::size_t block_size() const noexcept {
        return gates() * hidden_ * (features_ + hidden_ + 1);
    }
    std::size_t head_offset() const noexcept { return directions() * block_size(); }

    void check(const WindowedDataset& ds) const {
        if (ds.features != features_) {
            throw ModelError("dataset has " + std::to_string(ds.features) +
                             " features, network expects " + std::to_string(features_));
        }
        if (ds.lookback == 0) throw ModelError("dataset has zero lookback");
    }

    struct Sigmoid {
        double operator()(double v) const { return 1.0 / (1.0 + std::exp(-v)); }
    };

    Pass run_forward(const WindowedDataset& ds, std::span<const std::size_t> idx) const {
        const auto batch = static_cast<Eigen::Index>(idx.size());
        const auto f = static_cast<Eigen::Index>(features_);
        const auto hd = static_cast<Eigen::Index>(hidden_);
        const std::size_t steps = ds.lookback;

        Pass pass;
        pass.xs.assign(steps, Eigen::MatrixXd(f, batch));
        for (Eigen::Index b = 0; b < batch; ++b) {
            const auto w = ds.window(idx[static_cast<std::size_t>(b)]);
            for (std::size_t t = 0; t < steps; ++t) {
                for (Eigen::Index j = 0; j < f; ++j) {
                    pass.xs[t](j, b) = w[t * features_ + static_cast<std::size_t>(j)];
                }
            }
        }

        pass.final_state.resize(static_cast<Eigen::Index>(directions()) * hd, batch);
        pass.dirs.resize(directions());
        for (std::size_t d = 0; d < directions(); ++d) {
            DirectionCache& cache = pass.dirs[d];
            cache.xs = &pass.xs;
            cache.reversed = d == 1;
            const double* p = params_.data() + d * block_size();
            if (cell_ == CellKind::GRU) {
                forward_gru(cache, p, batch);
            } else {
                forward_lstm(cache, p, batch);
            }
            pass.final_state.middleRows(static_cast<Eigen::Index>(d) * hd, hd) = cache.h.back();
        }

        Eigen::Map<const Eigen::VectorXd> head_w(params_.data() + head_offset(),
                                                 static_cast<Eigen::Index>(directions()) * hd);
        const double head_b = params_[head_offset() + directions() * hidden_];
        pass.yhat = (head_w.transpose() * pass.final_state).array() + head_b;
        return pass;
    }

    const Eigen::MatrixXd& input_at(const DirectionCache& cache, std::size_t k) const {
        const std::size_t steps = cache.xs->size();
        return (*cache.xs)[cache.reversed ? steps - 1 - k : k];
    }

    void forward_lstm(DirectionCache& cache, const double* p, Eigen::Index batch) const {
        const auto f = static_cast<Eigen::Index>(features_);
        const auto hd = static_cast<Eigen::Index>(hidden_);
        Eigen::Map<const RowMat> w(p, 4 * hd, f);
        Eigen::Map<const RowMat> u(p + 4 * hd * f, 4 * hd, hd);
        Eigen::Map<const Eigen::VectorXd> bias(p + 4 * hd * (f + hd), 4 * hd);

        const std::size_t steps = cache.xs->size();
        cache.act.resize(steps);
        cache.c.resize(steps);
        cache.h.resize(steps);
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(hd, batch);
        for (std::size_t k = 0; k < steps; ++k) {
            const Eigen::MatrixXd& hp = k ? cache.h[k - 1] : zero;
            const Eigen::MatrixXd& cp = k ? cache.c[k - 1] : zero;
            Eigen::MatrixXd a = w * input_at(cache, k);
            a.noalias() += u * hp;
            a.colwise() += bias;
            a.topRows(2 * hd) = a.topRows(2 * hd).unaryExpr(Sigmoid{});
            a.middleRows(2 * hd, hd) = a.middleRows(2 * hd, hd).array().tanh();
            a.bottomRows(hd) = a.bottomRows(hd).unaryExpr(Sigmoid{});
            cache.c[k] = a.middleRows(hd, hd).cwiseProduct(cp) +
                         a.topRows(hd).cwiseProduct(a.middleRows(2 * hd, hd));
            cache.h[k] = a.bottomRows(hd).cwiseProduct(cache.c[k].array().tanh().matrix());
            cache.act[k] = std::move(a);
        }
    }

    void backward_lstm(const DirectionCache& cache, Eigen::MatrixXd dh, const double* p,
                       double* g) const {
        const auto f = static_cast<Eigen::Index>(features_);
        const auto hd = static_cast<Eigen::Index>(hidden_);
        Eigen::Map<const RowMat> u(p + 4 * hd * f, 4 * hd, hd);
        Eigen::Map<RowMat> gw(g, 4 * hd, f);
        Eigen::Map<RowMat> gu(g + 4 * hd * f, 4 * hd, hd);
        Eigen::Map<Eigen::VectorXd> gb(g + 4 * hd * (f + hd), 4 * hd);

        const std::size_t steps = cache.xs->size();
        const Eigen::Index batch = dh.cols();
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(hd, batch);
        Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(hd, batch);
        Eigen::MatrixXd da(4 * hd, batch);
        for (std::size_t k = steps; k-- > 0;) {
            const Eigen::MatrixXd& a = cache.act[k];
            const Eigen::MatrixXd& hp = k ? cache.h[k - 1] : zero;
            const Eigen::MatrixXd& cp = k ? cache.c[k - 1] : zero;
            const auto ig = a.topRows(hd).array();
            const auto fg = a.middleRows(hd, hd).array();
            const auto cg = a.middleRows(2 * hd, hd).array();
            const auto og = a.bottomRows(hd).array();
            const Eigen::ArrayXXd tc = cache.c[k].array().tanh();

            dc.array() += dh.array() * og * (1.0 - tc.square());
            da.topRows(hd) = (dc.array() * cg * ig * (1.0 - ig)).matrix();
            da.middleRows(hd, hd) = (dc.array() * cp.array() * fg * (1.0 - fg)).matrix();
            da.middleRows(2 * hd, hd) = (dc.array() * ig * (1.0 - cg.square())).matrix();
            da.bottomRows(hd) = (dh.array() * tc * og * (1.0 - og)).matrix();

            gw.noalias() += da * input_at(cache, k).transpose();
            gu.noalias() += da * hp.transpose();
            gb.noalias() += da.rowwise().sum();
            dh.noalias() = u.transpose() * da;
            dc.array() *= fg;
        }
    }

    // z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
    // n = tanh(Wn x + Un (r * h) + bn), h' = (1 - z) * h + z * n.
    void forward_gru(DirectionCache& cache, const double* p, Eigen::Index batch) const {
        const auto f = static_cast<Eigen::Index>(features_);
        const auto hd = static_cast<Eigen::Index>(hidden_);
        Eigen::Map<const RowMat> w(p, 3 * hd, f);
        Eigen::Map<const RowMat> u(p + 3 * hd * f, 3 * hd, hd);
        Eigen::Map<const Eigen::VectorXd> bias(p + 3 * hd * (f + hd), 3 * hd);

        const std::size_t steps = cache.xs->size();
        cache.act.resize(steps);
        cache.h.resize(steps);
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(hd, batch);
        for (std::size_t k = 0; k < steps; ++k) {
            const Eigen::MatrixXd& hp = k ? cache.h[k - 1] : zero;
            Eigen::MatrixXd a = w * input_at(cache, k);
            a.topRows(2 * hd).noalias() += u.topRows(2 * hd) * hp;
            a.colwise() += bias;
            a.topRows(2 * hd) = a.topRows(2 * hd).unaryExpr(Sigmoid{});
            const Eigen::MatrixXd rh = a.middleRows(hd, hd).cwiseProduct(hp);
            a.bottomRows(hd).noalias() += u.bottomRows(hd) * rh;
            a.bottomRows(hd) = a.bottomRows(hd).array().tanh();
            const auto z = a.topRows(hd).array();
            cache.h[k] = ((1.0 - z) * hp.array() + z * a.bottomRows(hd).array()).matrix();
            cache.act[k] = std::move(a);
        }
    }

    void backward_gru(const DirectionCache& cache, Eigen::MatrixXd dh, const double* p,
                      double* g) const {
        const auto f = static_cast<Eigen::Index>(features_);
        const auto hd = static_cast<Eigen::Index>(hidden_);
        Eigen::Map<const RowMat> u(p + 3 * hd * f, 3 * hd, hd);
        Eigen::Map<RowMat> gw(g, 3 * hd, f);
        Eigen::Map<RowMat> gu(g + 3 * hd * f, 3 * hd, hd);
        Eigen::Map<Eigen::VectorXd> gb(g + 3 * hd * (f + hd), 3 * hd);

        const std::size_t steps = cache.xs->size();
        const Eigen::Index batch = dh.cols();
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(hd, batch);
        Eigen::MatrixXd da(3 * hd, batch);
        for (std::size_t k = steps; k-- > 0;) {
            const Eigen::MatrixXd& a = cache.act[k];
            const Eigen::MatrixXd& hp = k ? cache.h[k - 1] : zero;
            const Eigen::MatrixXd& x = input_at(cache, k);
            const auto z = a.topRows(hd).array();
            const auto r = a.middleRows(hd, hd).array();
            const auto n = a.bottomRows(hd).array();

            // Candidate branch.
            const Eigen::MatrixXd dn = (dh.array() * z * (1.0 - n.square())).matrix();
            const Eigen::MatrixXd rh = (r * hp.array()).matrix();
            gw.bottomRows(hd).noalias() += dn * x.transpose();
            gu.bottomRows(hd).noalias() += dn * rh.transpose();
            gb.tail(hd).noalias() += dn.rowwise().sum();
            const Eigen::MatrixXd drh = u.bottomRows(hd).transpose() * dn;

            // Gate branch.
            da.topRows(hd) = (dh.array() * (n - hp.array()) * z * (1.0 - z)).matrix();
            da.middleRows(hd, hd) = (drh.array() * hp.array() * r * (1.0 - r)).matrix();
            const auto dzr = da.topRows(2 * hd);
            gw.topRows(2 * hd).noalias() += dzr * x.transpose();
            gu.topRows(2 * hd).noalias() += dzr * hp.transpose();
            gb.head(2 * hd).noalias() += dzr.rowwise().sum();

            Eigen::MatrixXd dhp = (dh.array() * (1.0 - z) + drh.array() * r).matrix();
            dhp.noalias() += u.topRows(2 * hd).transpose() * dzr;
            dh = std::move(dhp);
        }
    }

    CellKind cell_ = CellKind::LSTM;
    std::size_t features_ = 0;
    std::size_t hidden_ = 0;
    std::vector<double> params_;
};

struct RecurrentFit {
    RecurrentNet net;
    std::vector<double> loss_trace;  ///< mean training MSE per epoch
};

/// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the MSE of scaled
/// targets. Initialization and the per-epoch shuffle both draw from
/// config.seed, so identical inputs give identical traces.
inline RecurrentFit train_recurrent(const WindowedDataset& ds, const RecurrentConfig& config) {
    config.validate();
    if (ds.size() == 0) throw ModelError("cannot train on an empty dataset");
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    Rng rng(config.seed);
    RecurrentFit fit{RecurrentNet::initialized(config.cell, ds.features, config.hidden_units, rng), {}};
    auto params = fit.net.parameters();
    std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0), grad;
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            const std::span<const std::size_t> batch(order.data() + start, len);
            const double loss = fit.net.loss_and_gradient(ds, batch, grad);
            if (!std::isfinite(loss)) throw TrainingError("training loss became non-finite", epoch);
            total += loss * static_cast<double>(len);

            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                params[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
            }
        }
        const double epoch_loss = total / static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) throw TrainingError("training loss became non-finite", epoch);
        fit.loss_trace.push_back(epoch_loss);

        if (config.patience > 0) {
            if (epoch_loss < best) {
                best = epoch_loss;
                stale = 0;
            } else if (++stale >= config.patience) {
                break;
            }
        }
    }
    return fit;
}

}  // namespace wellcast::models
