#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wellcast/error.hpp"
#include "wellcast/matrix.hpp"

namespace wellcast::models {

struct TreeConfig {
    std::size_t rounds = 100;
    std::size_t max_depth = 3;
    double learning_rate = 0.1;
    std::size_t min_samples_leaf = 5;
    std::uint64_t seed = 42;

    void validate() const {
        if (max_depth == 0 || min_samples_leaf == 0) {
            throw ModelError("tree depth and min_samples_leaf must be positive");
        }
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
            throw ModelError("tree learning_rate must be in (0, 1]");
        }
    }

    bool operator==(const TreeConfig&) const = default;
};

/// Flat binary regression tree. Samples with x[feature] <= threshold go left.
struct RegressionTree {
    struct Node {
        std::int32_t feature = -1;  ///< -1 marks a leaf
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;

        bool operator==(const Node&) const = default;
    };
    std::vector<Node> nodes;

    double predict(std::span<const double> x) const {
        std::int32_t i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const Node& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    bool operator==(const RegressionTree&) const = default;
};

/// f(x) = base + learning_rate * sum of trees.
struct BoostedTrees {
    double base = 0.0;
    double learning_rate = 1.0;
    std::size_t features = 0;
    std::vector<RegressionTree> trees;

    double predict(std::span<const double> x) const {
        if (x.size() != features) {
            throw ModelError("boosted trees expect " + std::to_string(features) + " features, got " +
                             std::to_string(x.size()));
        }
        // Same accumulation order as training, so fitted values reproduce exactly.
        double f = base;
        for (const RegressionTree& t : trees) f += learning_rate * t.predict(x);
        return f;
    }

    std::size_t node_count() const {
        std::size_t n = 0;
        for (const auto& t : trees) n += t.nodes.size();
        return n;
    }
};

namespace detail {

/// Mean that returns c exactly when every value equals c.
inline double anchored_mean(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x - v.front();
    return v.front() + acc / static_cast<double>(v.size());
}

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> residual, const TreeConfig& cfg,
                const std::vector<std::vector<std::uint32_t>>& presorted)
        : x_(x), r_(residual), cfg_(cfg), presorted_(presorted), in_node_(x.rows(), 0) {}

    RegressionTree build() {
        RegressionTree tree;
        std::vector<std::uint32_t> all(x_.rows());
        std::iota(all.begin(), all.end(), 0u);
        grow(tree, all, presorted_, 0);
        return tree;
    }

private:
    std::int32_t grow(RegressionTree& tree, const std::vector<std::uint32_t>& members,
                      const std::vector<std::vector<std::uint32_t>>& sorted, std::size_t depth) {
        const auto id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        double sum = 0.0;
        for (std::uint32_t i : members) sum += r_[i];
        const double count = static_cast<double>(members.size());

        std::int32_t best_feature = -1;
        double best_gain = 0.0;
        double best_threshold = 0.0;
        if (depth < cfg_.max_depth && members.size() >= 2 * cfg_.min_samples_leaf) {
            const double parent = sum * sum / count;
            for (std::size_t f = 0; f < x_.cols(); ++f) {
                const auto& order = sorted[f];
                double left = 0.0;
                for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                    left += r_[order[k]];
                    const std::size_t n_left = k + 1;
                    const double a = x_(order[k], f);
                    const double b = x_(order[k + 1], f);
                    if (n_left < cfg_.min_samples_leaf) continue;
                    if (order.size() - n_left < cfg_.min_samples_leaf) break;
                    if (!(a < b)) continue;
                    const double right = sum - left;
                    const double gain = left * left / static_cast<double>(n_left) +
                                        right * right / static_cast<double>(order.size() - n_left) -
                                        parent;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = static_cast<std::int32_t>(f);
                        best_threshold = a + (b - a) / 2.0;
                    }
                }
            }
        }

        if (best_feature < 0) {
            std::vector<double> vals;
            vals.reserve(members.size());
            for (std::uint32_t i : members) vals.push_back(r_[i]);
            tree.nodes[static_cast<std::size_t>(id)].value = anchored_mean(vals);
            return id;
        }

        const auto bf = static_cast<std::size_t>(best_feature);
        std::vector<std::uint32_t> left_members, right_members;
        for (std::uint32_t i : members) {
            const bool go_left = x_(i, bf) <= best_threshold;
            in_node_[i] = go_left ? 1 : 2;
            (go_left ? left_members : right_members).push_back(i);
        }
        std::vector<std::vector<std::uint32_t>> left_sorted(x_.cols()), right_sorted(x_.cols());
        for (std::size_t f = 0; f < x_.cols(); ++f) {
            left_sorted[f].reserve(left_members.size());
            right_sorted[f].reserve(right_members.size());
            for (std::uint32_t i : sorted[f]) {
                (in_node_[i] == 1 ? left_sorted[f] : right_sorted[f]).push_back(i);
            }
        }
        const std::int32_t l = grow(tree, left_members, left_sorted, depth + 1);
        const std::int32_t r = grow(tree, right_members, right_sorted, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    const Matrix& x_;
    std::span<const double> r_;
    const TreeConfig& cfg_;
    const std::vector<std::vector<std::uint32_t>>& presorted_;
    std::vector<std::uint8_t> in_node_;
};

}  // namespace detail

struct BoostedFit {
    BoostedTrees model;
    std::vector<double> loss_trace;  ///< training MSE after each round
};

/// Squared-error gradient boosting: start from mean(y), then each round fits
/// a depth-limited variance-reduction tree to the residuals, with split
/// thresholds at midpoints between distinct feature values, and adds
/// learning_rate times its output.
inline BoostedFit train_gbt(const Matrix& x, std::span<const double> y, const TreeConfig& config) {
    config.validate();
    if (x.rows() == 0 || y.empty()) throw ModelError("cannot boost on an empty dataset");
    if (x.rows() != y.size()) throw ModelError("feature and target row counts differ");
    if (x.rows() < 2 * config.min_samples_leaf) {
        throw ModelError("need at least 2 * min_samples_leaf = " +
                         std::to_string(2 * config.min_samples_leaf) + " samples");
    }

    const std::size_t m = x.rows();
    std::vector<std::vector<std::uint32_t>> presorted(x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
        auto& order = presorted[f];
        order.resize(m);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    }

    BoostedFit fit;
    fit.model.base = detail::anchored_mean(y);
    fit.model.learning_rate = config.learning_rate;
    fit.model.features = x.cols();
    std::vector<double> pred(m, fit.model.base), residual(m);
    for (std::size_t round = 0; round < config.rounds; ++round) {
        for (std::size_t i = 0; i < m; ++i) residual[i] = y[i] - pred[i];
        detail::TreeBuilder builder(x, residual, config, presorted);
        RegressionTree tree = builder.build();
        double sse = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            pred[i] += config.learning_rate * tree.predict(x.row(i));
            sse += (y[i] - pred[i]) * (y[i] - pred[i]);
        }
        fit.model.trees.push_back(std::move(tree));
        fit.loss_trace.push_back(sse / static_cast<double>(m));
    }
    return fit;
}

}  // namespace wellcast::models
