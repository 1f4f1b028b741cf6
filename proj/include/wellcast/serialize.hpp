#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "wellcast/changepoint.hpp"
#include "wellcast/conformal.hpp"
#include "wellcast/error.hpp"
#include "wellcast/features.hpp"
#include "wellcast/metrics.hpp"
#include "wellcast/models.hpp"
#include "wellcast/synth.hpp"

namespace wellcast {

using json = nlohmann::json;

inline constexpr std::string_view kModelFormat = "wellcast-model";
inline constexpr int kModelFormatVersion = 1;

namespace features {

inline void to_json(json& j, const FeatureSpec& s) {
    j = json{{"target", s.target}, {"exogenous", s.exogenous}, {"lookback", s.lookback}};
}

inline void from_json(const json& j, FeatureSpec& s) {
    s.target = j.value("target", s.target);
    s.exogenous = j.value("exogenous", s.exogenous);
    s.lookback = j.value("lookback", s.lookback);
}

inline void to_json(json& j, const Scaler& s) { j = json{{"mean", s.mean}, {"std", s.std}}; }

inline void from_json(const json& j, Scaler& s) {
    j.at("mean").get_to(s.mean);
    j.at("std").get_to(s.std);
    if (s.mean.size() != s.std.size()) throw ModelError("scaler mean/std lengths differ");
}

}  // namespace features

namespace models {

inline CellKind parse_cell(std::string_view s) {
    switch (parse_model_kind(s)) {
        case ModelKind::LSTM: return CellKind::LSTM;
        case ModelKind::BiLSTM: return CellKind::BiLSTM;
        case ModelKind::GRU: return CellKind::GRU;
        case ModelKind::GBT: break;
    }
    throw ModelError("'" + std::string(s) + "' is not a recurrent cell");
}

inline void to_json(json& j, const RecurrentConfig& c) {
    j = json{{"kind", to_string(c.cell)},          {"hidden_units", c.hidden_units},
             {"epochs", c.epochs},                 {"learning_rate", c.learning_rate},
             {"batch_size", c.batch_size},         {"seed", c.seed},
             {"patience", c.patience}};
}

inline void from_json(const json& j, RecurrentConfig& c) {
    c.cell = parse_cell(j.at("kind").get<std::string>());
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.patience = j.value("patience", c.patience);
}

inline void to_json(json& j, const TreeConfig& c) {
    j = json{{"kind", "gbt"},
             {"rounds", c.rounds},
             {"max_depth", c.max_depth},
             {"learning_rate", c.learning_rate},
             {"min_samples_leaf", c.min_samples_leaf},
             {"seed", c.seed}};
}

inline void from_json(const json& j, TreeConfig& c) {
    c.rounds = j.value("rounds", c.rounds);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
    c.seed = j.value("seed", c.seed);
}

inline json config_to_json(const ModelConfig& c) {
    return std::visit([](const auto& v) { return json(v); }, c);
}

inline ModelConfig config_from_json(const json& j) {
    if (parse_model_kind(j.at("kind").get<std::string>()) == ModelKind::GBT) return j.get<TreeConfig>();
    return j.get<RecurrentConfig>();
}

inline json tree_to_json(const RegressionTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
        if (n.feature < 0) {
            nodes.push_back(json{{"value", n.value}});
        } else {
            nodes.push_back(json{{"feature", n.feature}, {"threshold", n.threshold},
                                 {"left", n.left}, {"right", n.right}});
        }
    }
    return nodes;
}

inline RegressionTree tree_from_json(const json& j) {
    RegressionTree t;
    for (const auto& n : j) {
        RegressionTree::Node node;
        if (n.contains("feature")) {
            node.feature = n.at("feature").get<std::int32_t>();
            node.threshold = n.at("threshold").get<double>();
            node.left = n.at("left").get<std::int32_t>();
            node.right = n.at("right").get<std::int32_t>();
        } else {
            node.value = n.at("value").get<double>();
        }
        t.nodes.push_back(node);
    }
    const auto count = static_cast<std::int32_t>(t.nodes.size());
    for (const auto& n : t.nodes) {
        if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)) {
            throw ModelError("tree node references a child out of range");
        }
    }
    if (t.nodes.empty()) throw ModelError("empty tree in model file");
    return t;
}

/// Versioned model document: config snapshot, feature spec, scaler
/// statistics, flat parameters (or trees) and the loss trace.
inline json forecaster_to_json(const Forecaster& f) {
    json j{{"format", kModelFormat},
           {"version", kModelFormatVersion},
           {"kind", to_string(f.kind)},
           {"config", config_to_json(f.config)},
           {"feature_spec", f.spec},
           {"input_scaler", f.input_scaler},
           {"target_scaler", f.target_scaler},
           {"loss_trace", f.fitted.loss_trace}};
    if (const auto* net = std::get_if<RecurrentNet>(&f.fitted.model)) {
        j["hidden_units"] = net->hidden();
        j["features"] = net->features();
        j["parameters"] = std::vector<double>(net->parameters().begin(), net->parameters().end());
    } else {
        const auto& b = std::get<BoostedTrees>(f.fitted.model);
        json trees = json::array();
        for (const auto& t : b.trees) trees.push_back(tree_to_json(t));
        j["base"] = b.base;
        j["learning_rate"] = b.learning_rate;
        j["features"] = b.features;
        j["trees"] = std::move(trees);
    }
    return j;
}

inline Forecaster forecaster_from_json(const json& j) {
    if (j.value("format", std::string{}) != kModelFormat) throw ModelError("not a wellcast model file");
    if (j.value("version", 0) != kModelFormatVersion) {
        throw ModelError("unsupported model format version " + std::to_string(j.value("version", 0)));
    }
    Forecaster f;
    f.kind = parse_model_kind(j.at("kind").get<std::string>());
    f.config = config_from_json(j.at("config"));
    f.spec = j.at("feature_spec").get<features::FeatureSpec>();
    f.input_scaler = j.at("input_scaler").get<features::Scaler>();
    f.target_scaler = j.at("target_scaler").get<features::Scaler>();
    f.fitted.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    if (f.input_scaler.columns() != f.spec.exogenous.size() + 1 || f.target_scaler.columns() != 1) {
        throw ModelError("scaler shapes do not match the feature spec");
    }
    if (f.kind == ModelKind::GBT) {
        BoostedTrees b;
        b.base = j.at("base").get<double>();
        b.learning_rate = j.at("learning_rate").get<double>();
        b.features = j.at("features").get<std::size_t>();
        for (const auto& t : j.at("trees")) b.trees.push_back(tree_from_json(t));
        f.fitted.model = std::move(b);
    } else {
        RecurrentNet net(std::get<RecurrentConfig>(f.config).cell, j.at("features").get<std::size_t>(),
                         j.at("hidden_units").get<std::size_t>());
        net.set_parameters(j.at("parameters").get<std::vector<double>>());
        f.fitted.model = std::move(net);
    }
    return f;
}

}  // namespace models

namespace metrics {

inline void to_json(json& j, const MetricReport& r) {
    j = json{{"mae", r.mae},   {"rmse", r.rmse}, {"smape", r.smape}, {"forecast_bias", r.forecast_bias},
             {"pda", r.pda},   {"n", r.n},       {"tag", to_string(r.tag)}};
}

inline void from_json(const json& j, MetricReport& r) {
    r.mae = j.at("mae").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.smape = j.at("smape").get<double>();
    r.forecast_bias = j.at("forecast_bias").get<double>();
    r.pda = j.at("pda").get<double>();
    r.n = j.value("n", std::size_t{0});
    r.tag = parse_tag(j.at("tag").get<std::string>());
}

}  // namespace metrics

namespace changepoint {

inline json to_json(const Segmentation& s, std::string_view algorithm, double penalty) {
    return json{{"algorithm", algorithm},
                {"penalty", penalty},
                {"breakpoints", s.breakpoints},
                {"total_cost", s.total_cost}};
}

}  // namespace changepoint

namespace synth {

inline void from_json(const json& j, WellPhysics& p) {
    p.p_res_initial = j.value("p_res_initial", p.p_res_initial);
    p.decline_rate = j.value("decline_rate", p.decline_rate);
    p.q_o_max = j.value("q_o_max", p.q_o_max);
    p.q_w_max = j.value("q_w_max", p.q_w_max);
    p.noise_std = j.value("noise_std", p.noise_std);
    p.seed = j.value("seed", p.seed);
    p.bhp_fraction = j.value("bhp_fraction", p.bhp_fraction);
    p.bhp_period = j.value("bhp_period", p.bhp_period);
    p.bhp_jitter = j.value("bhp_jitter", p.bhp_jitter);
    p.water_cut_start = j.value("water_cut_start", p.water_cut_start);
    p.water_cut_end = j.value("water_cut_end", p.water_cut_end);
    p.gor_start = j.value("gor_start", p.gor_start);
    p.gor_end = j.value("gor_end", p.gor_end);
    if (j.contains("start")) p.start = Date::parse(j.at("start").get<std::string>());
    p.rate_unit = j.value("rate_unit", p.rate_unit);
    p.pressure_unit = j.value("pressure_unit", p.pressure_unit);
}

inline void to_json(json& j, const WellPhysics& p) {
    j = json{{"p_res_initial", p.p_res_initial}, {"decline_rate", p.decline_rate},
             {"q_o_max", p.q_o_max},             {"q_w_max", p.q_w_max},
             {"noise_std", p.noise_std},         {"seed", p.seed},
             {"bhp_fraction", p.bhp_fraction},   {"bhp_period", p.bhp_period},
             {"bhp_jitter", p.bhp_jitter},       {"water_cut_start", p.water_cut_start},
             {"water_cut_end", p.water_cut_end}, {"gor_start", p.gor_start},
             {"gor_end", p.gor_end},             {"start", p.start.to_string()},
             {"rate_unit", p.rate_unit},         {"pressure_unit", p.pressure_unit}};
}

inline void from_json(const json& j, Intervention& iv) {
    iv.day = j.at("day").get<std::size_t>();
    iv.bhp_shift = j.value("bhp_shift", 0.0);
    iv.shut_in_days = j.value("shut_in_days", std::size_t{0});
}

inline void to_json(json& j, const Intervention& iv) {
    j = json{{"day", iv.day}, {"bhp_shift", iv.bhp_shift}, {"shut_in_days", iv.shut_in_days}};
}

}  // namespace synth

}  // namespace wellcast
