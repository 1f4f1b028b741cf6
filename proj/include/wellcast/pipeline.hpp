#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wellcast/changepoint.hpp"
#include "wellcast/conformal.hpp"
#include "wellcast/error.hpp"
#include "wellcast/features.hpp"
#include "wellcast/ingest.hpp"
#include "wellcast/metrics.hpp"
#include "wellcast/models.hpp"
#include "wellcast/schema.hpp"
#include "wellcast/serialize.hpp"
#include "wellcast/synth.hpp"

namespace wellcast::pipeline {

namespace fs = std::filesystem;

/// File names each stage writes inside the output directory.
namespace artifact {
inline constexpr const char* kImputed = "imputed.csv";
inline constexpr const char* kChangepoints = "changepoints.json";
inline constexpr const char* kSegments = "segments.csv";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kLoss = "loss.csv";
inline constexpr const char* kLeaderboard = "leaderboard.csv";
inline constexpr const char* kForecastTest = "forecast_test.csv";
inline constexpr const char* kForecastOos = "forecast_oos.csv";
inline constexpr const char* kCalibration = "calibration.json";
inline constexpr const char* kMetricsJson = "metrics.json";
inline constexpr const char* kMetricsCsv = "metrics.csv";
inline constexpr const char* kComparisonCsv = "comparison.csv";
inline constexpr const char* kComparisonMd = "comparison.md";
}  // namespace artifact

struct ModelSearch {
    models::ModelKind kind = models::ModelKind::LSTM;
    bool random = false;
    double validation_fraction = 0.2;
    std::size_t samples = 8;
    std::size_t patience = 0;

    std::vector<std::size_t> hidden_units{16, 32, 64};
    std::vector<double> learning_rate;  // empty: kind-specific default
    std::vector<std::size_t> epochs{200};
    std::vector<std::size_t> batch_size{32};
    std::vector<std::size_t> rounds{100, 300};
    std::vector<std::size_t> max_depth{3, 5};
    std::vector<std::size_t> min_samples_leaf{5};
    models::SearchSpace ranges;

    /// Candidate list: the cartesian grid, or `samples` draws from `ranges`.
    std::vector<models::ModelConfig> candidates(std::uint64_t seed) const {
        if (random) {
            models::SearchSpace space = ranges;
            space.kind = kind;
            auto out = models::sample_candidates(space, samples, seed);
            for (auto& c : out) {
                if (auto* r = std::get_if<models::RecurrentConfig>(&c)) r->patience = patience;
            }
            return out;
        }
        std::vector<models::ModelConfig> out;
        if (kind == models::ModelKind::GBT) {
            const std::vector<double> lrs = learning_rate.empty() ? std::vector<double>{0.1} : learning_rate;
            for (std::size_t r : rounds)
                for (std::size_t d : max_depth)
                    for (double lr : lrs)
                        for (std::size_t leaf : min_samples_leaf) {
                            out.emplace_back(models::TreeConfig{r, d, lr, leaf, seed});
                        }
            return out;
        }
        const std::vector<double> lrs = learning_rate.empty() ? std::vector<double>{1e-3, 3e-3} : learning_rate;
        const models::CellKind cell = kind == models::ModelKind::GRU      ? models::CellKind::GRU
                                      : kind == models::ModelKind::BiLSTM ? models::CellKind::BiLSTM
                                                                          : models::CellKind::LSTM;
        for (std::size_t h : hidden_units)
            for (double lr : lrs)
                for (std::size_t e : epochs)
                    for (std::size_t b : batch_size) {
                        out.emplace_back(models::RecurrentConfig{cell, h, e, lr, b, seed, patience});
                    }
        return out;
    }
};

struct ChangepointOptions {
    std::string column;  // empty: the target
    std::string algorithm = "pelt";
    std::optional<double> penalty;
    std::optional<std::size_t> max_bkps;
    bool restrict_training = false;
};

struct SynthOptions {
    synth::WellPhysics physics;
    std::vector<synth::Intervention> interventions;
    std::size_t n_days = 1000;
};

/// Parsed, validated run configuration.
struct RunConfig {
    std::string name;
    fs::path input_csv;
    fs::path output_dir;
    std::uint64_t seed = 42;
    double alpha = 0.05;
    std::map<std::string, std::string> units;
    features::FeatureSpec features;
    std::optional<SplitSpec> split;
    std::map<std::string, std::string> column_aliases;
    std::map<std::string, std::string> oos_exogenous{{"WPR_H", "WPR"}, {"GPR_H", "GPR"}, {"BHP_H", "BHP"}};
    models::TargetFeed feed = models::TargetFeed::Recursive;
    std::string simulated_target = "OPR";
    std::size_t impute_k = 5;
    ChangepointOptions changepoints;
    ModelSearch model;
    bool strict_calibration = false;
    bool blind_calibration = true;  // calibrate on blind test-split forecasts
    bool clamp_nonnegative = false;
    std::optional<SynthOptions> synth;

    /// Hex FNV-1a digest of the effective config (output_dir excluded).
    std::string config_hash;

    std::string provenance() const {
        return "wellcast config_hash=" + config_hash + " seed=" + std::to_string(seed);
    }
    nlohmann::json provenance_json() const {
        return nlohmann::json{{"config_hash", config_hash}, {"seed", seed}};
    }
    fs::path out(const char* file) const { return output_dir / file; }
};

inline std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <typename T>
std::vector<T> list_or(const nlohmann::json& j, const char* key, std::vector<T> fallback) {
    return j.contains(key) ? j.at(key).get<std::vector<T>>() : std::move(fallback);
}

}  // namespace detail

/// Builds a RunConfig from JSON. Relative paths resolve against `base_dir`.
/// Overrides apply before hashing, so the hash reflects what actually runs.
inline RunConfig parse_run_config(nlohmann::json j, const fs::path& base_dir,
                                  const std::optional<fs::path>& out_override = std::nullopt,
                                  const std::optional<std::uint64_t>& seed_override = std::nullopt) {
    if (seed_override) j["seed"] = *seed_override;
    validate_run_config(j);

    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.alpha = j.value("alpha", c.alpha);
    c.input_csv = detail::resolve(base_dir, j.at("input_csv").get<std::string>());
    c.output_dir = out_override ? *out_override : detail::resolve(base_dir, j.value("output_dir", std::string("out")));
    c.units = j.value("units", c.units);
    if (j.contains("features")) c.features = j.at("features").get<features::FeatureSpec>();
    try {
        c.features.validate();
    } catch (const FeatureError& e) {
        throw SchemaError(std::string("config /features: ") + e.what());
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        SplitSpec spec;
        spec.train_fraction = s.value("train_fraction", spec.train_fraction);
        spec.oos_start = Date::parse(s.at("oos_start").get<std::string>());
        spec.oos_end = Date::parse(s.at("oos_end").get<std::string>());
        if (spec.oos_end < spec.oos_start) throw SchemaError("config /split: oos_end precedes oos_start");
        c.split = spec;
    }
    c.column_aliases = j.value("column_aliases", c.column_aliases);
    c.oos_exogenous = j.value("oos_exogenous", c.oos_exogenous);
    c.feed = j.value("oos_target_feed", std::string("recursive")) == "simulated" ? models::TargetFeed::Simulated
                                                                               : models::TargetFeed::Recursive;
    c.simulated_target = j.value("simulated_target", c.simulated_target);
    if (j.contains("impute")) c.impute_k = j.at("impute").value("k", c.impute_k);

    if (j.contains("changepoints")) {
        const auto& cp = j.at("changepoints");
        c.changepoints.column = cp.value("column", std::string{});
        c.changepoints.algorithm = cp.value("algorithm", c.changepoints.algorithm);
        if (cp.contains("penalty") && !cp.at("penalty").is_null()) c.changepoints.penalty = cp.at("penalty").get<double>();
        if (cp.contains("max_bkps") && !cp.at("max_bkps").is_null()) {
            c.changepoints.max_bkps = cp.at("max_bkps").get<std::size_t>();
        }
        c.changepoints.restrict_training = cp.value("restrict_training", false);
    }
    if (c.changepoints.column.empty()) c.changepoints.column = c.features.target;

    if (j.contains("model")) {
        const auto& m = j.at("model");
        ModelSearch& s = c.model;
        s.kind = models::parse_model_kind(m.at("kind").get<std::string>());
        s.random = m.value("search", std::string("grid")) == "random";
        s.validation_fraction = m.value("validation_fraction", s.validation_fraction);
        s.samples = m.value("samples", s.samples);
        s.patience = m.value("patience", s.patience);
        if (m.contains("grid")) {
            const auto& g = m.at("grid");
            s.hidden_units = detail::list_or(g, "hidden_units", s.hidden_units);
            s.learning_rate = detail::list_or(g, "learning_rate", s.learning_rate);
            s.epochs = detail::list_or(g, "epochs", s.epochs);
            s.batch_size = detail::list_or(g, "batch_size", s.batch_size);
            s.rounds = detail::list_or(g, "rounds", s.rounds);
            s.max_depth = detail::list_or(g, "max_depth", s.max_depth);
            s.min_samples_leaf = detail::list_or(g, "min_samples_leaf", s.min_samples_leaf);
        }
        if (m.contains("ranges")) {
            const auto& r = m.at("ranges");
            auto int_range = [&](const char* key, std::size_t& lo, std::size_t& hi) {
                if (!r.contains(key)) return;
                lo = r.at(key).at(0).get<std::size_t>();
                hi = r.at(key).at(1).get<std::size_t>();
                if (hi < lo) throw SchemaError(std::string("config /model/ranges/") + key + ": max < min");
            };
            int_range("hidden_units", s.ranges.hidden_min, s.ranges.hidden_max);
            int_range("epochs", s.ranges.epochs_min, s.ranges.epochs_max);
            int_range("batch_size", s.ranges.batch_min, s.ranges.batch_max);
            int_range("rounds", s.ranges.rounds_min, s.ranges.rounds_max);
            int_range("max_depth", s.ranges.depth_min, s.ranges.depth_max);
            if (r.contains("learning_rate")) {
                s.ranges.lr_min = r.at("learning_rate").at(0).get<double>();
                s.ranges.lr_max = r.at("learning_rate").at(1).get<double>();
                if (s.ranges.lr_max < s.ranges.lr_min) throw SchemaError("config /model/ranges/learning_rate: max < min");
            }
        }
        if (s.kind == models::ModelKind::GBT && !(m.contains("ranges") && m.at("ranges").contains("learning_rate"))) {
            s.ranges.lr_min = s.ranges.lr_max = 0.1;
        }
        s.ranges.min_leaf = s.min_samples_leaf.front();
    }
    c.name = j.value("name", std::string(models::to_string(c.model.kind)));

    if (j.contains("conformal")) {
        c.strict_calibration = j.at("conformal").value("strict", false);
        c.clamp_nonnegative = j.at("conformal").value("clamp_nonnegative", false);
        c.blind_calibration = j.at("conformal").value("residuals", std::string("blind")) == "blind";
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        SynthOptions opt;
        opt.physics.seed = c.seed;
        if (s.contains("physics")) s.at("physics").get_to(opt.physics);
        opt.interventions = s.value("interventions", opt.interventions);
        opt.n_days = s.value("n_days", opt.n_days);
        c.synth = opt;
    }

    nlohmann::json hashed = j;
    hashed.erase("output_dir");
    c.config_hash = fnv1a_hex(hashed.dump());
    return c;
}

inline RunConfig load_run_config(const fs::path& path, const std::optional<fs::path>& out_override = std::nullopt,
                                 const std::optional<std::uint64_t>& seed_override = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw StageError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(std::move(j), path.parent_path(), out_override, seed_override);
}

// ---------------------------------------------------------------------------
// File helpers

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StageError("cannot write " + tmp.string());
        out << content;
        if (!out) throw StageError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string format_number(double v) { return wellcast::detail::format_double(v); }

inline void require_artifact(const fs::path& p, const char* producer) {
    if (!fs::exists(p)) {
        throw StageError("missing upstream artifact " + p.string() + "; run `wellcast " + producer + "` first");
    }
}

/// Reads every recognized column present in a well CSV.
inline SeriesFrame read_frame(const fs::path& path, const std::map<std::string, std::string>& units = {}) {
    std::ifstream probe(path);
    if (!probe) throw StageError("cannot open " + path.string());
    const auto cols = recognized_header_columns(probe);
    std::ifstream in(path);
    return parse_csv(in, cols, units);
}

inline nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw StageError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw StageError(path.string() + " is not valid JSON: " + e.what());
    }
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// One row of an interval forecast file.
struct IntervalRow {
    Date date;
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::optional<double> actual;
};

inline std::string interval_csv(const RunConfig& cfg, const std::vector<IntervalRow>& rows) {
    std::ostringstream out;
    out << "# " << cfg.provenance() << "\n# " << conformal::kExchangeabilityNote << "\n";
    out << "date,point,lower,upper,actual,in_bounds\n";
    for (const auto& r : rows) {
        out << r.date.to_string() << ',' << format_number(r.point) << ',' << format_number(r.lower) << ','
            << format_number(r.upper) << ',';
        if (r.actual) {
            out << format_number(*r.actual) << ',' << (r.lower <= *r.actual && *r.actual <= r.upper ? 1 : 0);
        } else {
            out << ',';
        }
        out << '\n';
    }
    return out.str();
}

inline std::vector<IntervalRow> read_interval_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw StageError("cannot open " + path.string());
    std::string line;
    bool header = false;
    std::vector<IntervalRow> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line.rfind("date,point,lower,upper,actual", 0) != 0) {
                throw StageError(path.string() + " is not an interval forecast file");
            }
            header = true;
            continue;
        }
        const auto f = wellcast::detail::split_fields(line);
        if (f.size() < 5) throw StageError("malformed row in " + path.string());
        IntervalRow r;
        r.date = Date::parse(f[0]);
        const auto p = wellcast::detail::parse_cell(f[1]);
        const auto lo = wellcast::detail::parse_cell(f[2]);
        const auto hi = wellcast::detail::parse_cell(f[3]);
        if (!p || !lo || !hi) throw StageError("non-numeric interval in " + path.string());
        r.point = *p;
        r.lower = *lo;
        r.upper = *hi;
        r.actual = wellcast::detail::parse_cell(f[4]);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Data preparation shared by the stages

/// Fills each alias target from its source column: wholesale when the
/// target is absent, cell by cell where it is missing.
inline SeriesFrame apply_column_aliases(SeriesFrame frame, const std::map<std::string, std::string>& aliases) {
    for (const auto& [target, source] : aliases) {
        if (!frame.has(source)) throw StageError("alias source column '" + source + "' not in data");
        const auto src = frame.column(source);
        if (!frame.has(target)) {
            frame.add_column(target, src.values, src.unit);
            continue;
        }
        auto& dst = frame.column(target).values;
        for (std::size_t r = 0; r < dst.size(); ++r) {
            if (!dst[r]) dst[r] = src.values[r];
        }
    }
    return frame;
}

/// Imputes historical and simulated columns as separate groups, so no
/// simulated value is ever inferred from a measured target.
inline SeriesFrame impute_frame(const SeriesFrame& frame, std::size_t k, bool include_historical = true) {
    SeriesFrame out = frame;
    std::vector<std::string> historical, simulated;
    for (const auto& c : frame.columns()) {
        if (c.name.size() > 2 && c.name.ends_with("_H")) {
            historical.push_back(c.name);
        } else {
            simulated.push_back(c.name);
        }
    }
    if (!include_historical) historical.clear();
    for (const auto* group : {&historical, &simulated}) {
        if (group->empty()) continue;
        bool any_missing = false;
        for (const auto& name : *group) any_missing = any_missing || out.missing_count(name) > 0;
        if (any_missing) out = knn_impute(out, k, *group);
    }
    return out;
}

inline SeriesFrame load_imputed(const RunConfig& cfg) {
    require_artifact(cfg.out(artifact::kImputed), "impute");
    return read_frame(cfg.out(artifact::kImputed), cfg.units);
}

inline Split split_frame(const RunConfig& cfg, const SeriesFrame& frame) {
    if (!cfg.split) throw StageError("config has no split section");
    return split(frame, *cfg.split);
}

/// Training rows, optionally cut to start at the last detected changepoint.
inline SeriesFrame training_rows(const RunConfig& cfg, const SeriesFrame& train) {
    if (!cfg.changepoints.restrict_training) return train;
    const auto y = train.dense(cfg.changepoints.column);
    const double pen = cfg.changepoints.penalty.value_or(changepoint::default_penalty(y));
    const auto seg = changepoint::pelt(y, pen);
    if (seg.breakpoints.empty()) return train;
    const std::size_t start = seg.breakpoints.back();
    if (train.rows() - start <= 2 * cfg.features.lookback) {
        throw StageError("segment after the last changepoint has " + std::to_string(train.rows() - start) +
                         " rows; too short for lookback " + std::to_string(cfg.features.lookback));
    }
    return train.slice(start, train.rows());
}

// ---------------------------------------------------------------------------
// Stages

struct StageResult {
    std::vector<fs::path> artifacts;
};

inline StageResult run_synth(const RunConfig& cfg) {
    if (!cfg.synth) throw StageError("config has no synth section");
    const SeriesFrame frame = synth::generate_well(cfg.synth->physics, cfg.synth->interventions, cfg.synth->n_days);
    std::ostringstream out;
    const std::vector<std::string> preamble{cfg.provenance()};
    write_csv(out, frame, preamble);
    write_atomic(cfg.input_csv, out.str());
    return {{cfg.input_csv}};
}

inline StageResult run_impute(const RunConfig& cfg) {
    if (!fs::exists(cfg.input_csv)) throw StageError("input CSV " + cfg.input_csv.string() + " not found");
    SeriesFrame frame = resample_daily(read_frame(cfg.input_csv, cfg.units));
    frame = apply_column_aliases(std::move(frame), cfg.column_aliases);
    if (cfg.split) {
        // History and horizon are imputed apart so horizon values never reach
        // the history. In the horizon only simulated inputs are filled; a
        // missing measured value stays missing rather than becoming a fake actual.
        const auto& idx = frame.index();
        const auto cut =
            static_cast<std::size_t>(std::lower_bound(idx.begin(), idx.end(), cfg.split->oos_start) - idx.begin());
        if (cut > 0 && cut < frame.rows()) {
            const SeriesFrame history = impute_frame(frame.slice(0, cut), cfg.impute_k);
            SeriesFrame horizon = impute_frame(frame.slice(cut, frame.rows()), cfg.impute_k, false);
            frame = history.concat(horizon);
        } else {
            frame = impute_frame(frame, cfg.impute_k);
        }
    } else {
        frame = impute_frame(frame, cfg.impute_k);
    }
    frame.validate(true);
    std::ostringstream out;
    const std::vector<std::string> preamble{cfg.provenance()};
    write_csv(out, frame, preamble);
    write_atomic(cfg.out(artifact::kImputed), out.str());
    return {{cfg.out(artifact::kImputed)}};
}

inline StageResult run_changepoints(const RunConfig& cfg) {
    const SeriesFrame frame = load_imputed(cfg);
    // Diagnostics cover the history only; the oos window is unseen.
    SeriesFrame history = frame;
    if (cfg.split) {
        const auto& idx = frame.index();
        const auto end = static_cast<std::size_t>(std::lower_bound(idx.begin(), idx.end(), cfg.split->oos_start) - idx.begin());
        history = frame.slice(0, end);
    }
    const auto y = history.dense(cfg.changepoints.column);
    const double pen = cfg.changepoints.penalty.value_or(changepoint::default_penalty(y));
    const bool use_binseg = cfg.changepoints.algorithm == "binseg";
    const auto seg = use_binseg ? changepoint::binseg(y, pen, cfg.changepoints.max_bkps) : changepoint::pelt(y, pen);

    nlohmann::json j = changepoint::to_json(seg, cfg.changepoints.algorithm, pen);
    j["column"] = cfg.changepoints.column;
    std::vector<std::string> dates;
    for (std::size_t b : seg.breakpoints) dates.push_back(history.index()[b].to_string());
    j["breakpoint_dates"] = dates;
    j["provenance"] = cfg.provenance_json();
    write_atomic(cfg.out(artifact::kChangepoints), dump_json(j));

    std::ostringstream seg_csv;
    seg_csv << "# " << cfg.provenance() << "\ndate,value,segment,is_breakpoint\n";
    std::size_t segment = 0, next = 0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const bool is_bkp = next < seg.breakpoints.size() && seg.breakpoints[next] == t;
        if (is_bkp) {
            ++segment;
            ++next;
        }
        seg_csv << history.index()[t].to_string() << ',' << format_number(y[t]) << ',' << segment << ','
                << (is_bkp ? 1 : 0) << '\n';
    }
    write_atomic(cfg.out(artifact::kSegments), seg_csv.str());
    return {{cfg.out(artifact::kChangepoints), cfg.out(artifact::kSegments)}};
}

inline StageResult run_train(const RunConfig& cfg, std::size_t threads = 1) {
    const SeriesFrame frame = load_imputed(cfg);
    const Split parts = split_frame(cfg, frame);
    const SeriesFrame train = training_rows(cfg, parts.train);
    const auto table = features::select_features(train, cfg.features);

    // Scale with training statistics, then search on chronological windows.
    const auto input_scaler = features::fit_scaler(table.x);
    const auto target_scaler = features::fit_scaler(std::span<const double>(table.y));
    const Matrix xs = features::apply_scaler(input_scaler, table.x);
    std::vector<double> ys(table.y.size());
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = target_scaler.scale(0, table.y[i]);
    const auto windows = models::make_windows(xs, ys, cfg.features.lookback);

    const auto candidates = cfg.model.candidates(cfg.seed);
    const auto search = models::grid_search(windows, candidates, cfg.model.validation_fraction, threads);
    const models::Forecaster f = models::fit_forecaster(table, cfg.features, search.best);

    nlohmann::json doc = models::forecaster_to_json(f);
    doc["provenance"] = cfg.provenance_json();
    doc["training_rows"] = {{"first", train.index().front().to_string()}, {"last", train.index().back().to_string()}};
    write_atomic(cfg.out(artifact::kModel), dump_json(doc));

    std::ostringstream loss;
    loss << "# " << cfg.provenance() << "\nepoch,mse\n";
    for (std::size_t e = 0; e < f.loss_trace().size(); ++e) loss << e << ',' << format_number(f.loss_trace()[e]) << '\n';
    write_atomic(cfg.out(artifact::kLoss), loss.str());

    std::ostringstream lb;
    lb << "# " << cfg.provenance() << "\nrank,candidate,config,parameters,validation_mae,status\n";
    for (std::size_t r = 0; r < search.leaderboard.size(); ++r) {
        const auto& e = search.leaderboard[r];
        std::string cfg_text = models::config_to_json(e.config).dump();
        std::replace(cfg_text.begin(), cfg_text.end(), ',', ';');
        lb << r + 1 << ',' << e.order << ',' << cfg_text << ',' << e.parameters << ','
           << (e.diverged ? std::string() : format_number(e.validation_mae)) << ','
           << (e.diverged ? "diverged" : "ok") << '\n';
    }
    write_atomic(cfg.out(artifact::kLeaderboard), lb.str());
    return {{cfg.out(artifact::kModel), cfg.out(artifact::kLoss), cfg.out(artifact::kLeaderboard)}};
}

inline models::Forecaster load_model(const RunConfig& cfg) {
    require_artifact(cfg.out(artifact::kModel), "train");
    models::Forecaster f = models::forecaster_from_json(read_json(cfg.out(artifact::kModel)));
    if (!(f.spec == cfg.features)) {
        throw StageError("stale model: " + cfg.out(artifact::kModel).string() +
                         " was trained with a different feature spec; rerun `wellcast train`");
    }
    return f;
}

/// Exogenous horizon rows, read from the simulated aliases of each exogenous column.
inline Matrix oos_exogenous_matrix(const RunConfig& cfg, const SeriesFrame& oos) {
    Matrix m(oos.rows(), cfg.features.exogenous.size());
    for (std::size_t c = 0; c < cfg.features.exogenous.size(); ++c) {
        const std::string& hist = cfg.features.exogenous[c];
        const auto it = cfg.oos_exogenous.find(hist);
        const std::string& source = it == cfg.oos_exogenous.end() ? hist : it->second;
        if (!oos.has(source)) throw StageError("oos exogenous column '" + source + "' not in data");
        const auto col = oos.dense(source);
        for (std::size_t r = 0; r < col.size(); ++r) m(r, c) = col[r];
    }
    return m;
}

struct Forecasts {
    std::vector<Date> test_dates;
    std::vector<double> test_point;
    std::vector<double> test_actual;
    std::vector<double> test_blind;  // test part forecast blind from the end of training
    std::vector<Date> oos_dates;
    std::vector<double> oos_point;
};

/// One-step test predictions and the blind oos forecast. The oos target
/// column is not read here.
inline Forecasts compute_forecasts(const RunConfig& cfg, const models::Forecaster& f, const Split& parts) {
    const SeriesFrame history = parts.train.concat(parts.test);
    const auto table = features::select_features(history, cfg.features);
    const std::size_t lookback = cfg.features.lookback;
    const std::size_t n_train = parts.train.rows();
    if (n_train < lookback) throw StageError("training part is shorter than the lookback");

    Forecasts out;
    const auto windows = models::make_windows(table.x, table.y, lookback);
    const std::size_t first = n_train - lookback;
    const auto test_windows = windows.slice(first, windows.size());
    out.test_point = f.predict(test_windows);
    out.test_actual = test_windows.targets;
    out.test_dates.assign(parts.test.index().begin(), parts.test.index().end());

    const std::size_t n_exo = cfg.features.exogenous.size();
    Matrix train_x(n_train, table.x.cols());
    std::copy_n(table.x.data().begin(), n_train * table.x.cols(), train_x.data().begin());
    Matrix test_exo(parts.test.rows(), n_exo);
    for (std::size_t r = 0; r < parts.test.rows(); ++r) {
        for (std::size_t c = 0; c < n_exo; ++c) test_exo(r, c) = table.x(n_train + r, c);
    }
    std::vector<double> test_sim;
    if (cfg.feed == models::TargetFeed::Simulated) test_sim = parts.test.dense(cfg.simulated_target);
    out.test_blind = models::forecast_blind(f, train_x, test_exo, cfg.feed, test_sim);

    const Matrix exo = oos_exogenous_matrix(cfg, parts.oos);
    std::vector<double> sim;
    if (cfg.feed == models::TargetFeed::Simulated) sim = parts.oos.dense(cfg.simulated_target);
    out.oos_point = models::forecast_blind(f, table.x, exo, cfg.feed, sim);
    out.oos_dates.assign(parts.oos.index().begin(), parts.oos.index().end());
    return out;
}

inline StageResult run_forecast(const RunConfig& cfg) {
    const SeriesFrame frame = load_imputed(cfg);
    const Split parts = split_frame(cfg, frame);
    const models::Forecaster f = load_model(cfg);
    const Forecasts fc = compute_forecasts(cfg, f, parts);

    // Calibrate on the test part; in strict mode only its first half
    // calibrates and the second half is reported.
    std::size_t cal_end = fc.test_point.size();
    std::size_t report_begin = 0;
    if (cfg.strict_calibration) {
        cal_end = fc.test_point.size() / 2;
        report_begin = cal_end;
    }
    const auto& cal_point = cfg.blind_calibration ? fc.test_blind : fc.test_point;
    const auto scores = conformal::nonconformity_scores(
        std::span<const double>(fc.test_actual).first(cal_end), std::span<const double>(cal_point).first(cal_end));
    const auto cal = conformal::calibrate(scores, cfg.alpha);

    auto intervals = [&](std::span<const double> point) {
        auto iv = conformal::predict_interval(point, cal);
        return cfg.clamp_nonnegative ? conformal::clamp_nonnegative(std::move(iv)) : iv;
    };

    std::vector<IntervalRow> test_rows;
    const auto test_iv = intervals(std::span<const double>(fc.test_point).subspan(report_begin));
    for (std::size_t i = 0; i < test_iv.point.size(); ++i) {
        test_rows.push_back({fc.test_dates[report_begin + i], test_iv.point[i], test_iv.lower[i], test_iv.upper[i],
                             fc.test_actual[report_begin + i]});
    }
    std::vector<IntervalRow> oos_rows;
    const auto oos_iv = intervals(fc.oos_point);
    const bool has_actual = parts.oos.has(cfg.features.target);
    for (std::size_t i = 0; i < oos_iv.point.size(); ++i) {
        IntervalRow r{fc.oos_dates[i], oos_iv.point[i], oos_iv.lower[i], oos_iv.upper[i], std::nullopt};
        if (has_actual) {
            const Cell a = parts.oos.column(cfg.features.target).values[i];
            if (a && std::isfinite(*a)) r.actual = *a;
        }
        oos_rows.push_back(r);
    }
    write_atomic(cfg.out(artifact::kForecastTest), interval_csv(cfg, test_rows));
    write_atomic(cfg.out(artifact::kForecastOos), interval_csv(cfg, oos_rows));

    nlohmann::json calj{{"alpha", cal.alpha},
                        {"epsilon", cal.epsilon},
                        {"n_cal", cal.n_cal},
                        {"rank", cal.rank},
                        {"calibration_set", cfg.strict_calibration ? "first half of test split" : "test split"},
                        {"residuals", cfg.blind_calibration ? "blind" : "one_step"},
                        {"exchangeability", conformal::kExchangeabilityNote},
                        {"model", models::to_string(f.kind)},
                        {"provenance", cfg.provenance_json()}};
    write_atomic(cfg.out(artifact::kCalibration), dump_json(calj));
    return {{cfg.out(artifact::kForecastTest), cfg.out(artifact::kForecastOos), cfg.out(artifact::kCalibration)}};
}

struct Evaluation {
    std::vector<metrics::MetricReport> reports;
    std::map<std::string, conformal::CoverageReport> coverage;  // keyed by dataset tag
    std::optional<metrics::MetricReport> persistence;
};

inline nlohmann::json coverage_json(const conformal::CoverageReport& c, double alpha) {
    return nlohmann::json{{"coverage", c.coverage},
                          {"out_of_bounds", c.out_of_bounds},
                          {"out_of_bounds_pct", 100.0 * c.out_of_bounds_fraction()},
                          {"shortfall", conformal::coverage_shortfall(c.coverage, alpha)}};
}

inline StageResult run_evaluate(const RunConfig& cfg) {
    require_artifact(cfg.out(artifact::kForecastTest), "forecast");
    require_artifact(cfg.out(artifact::kForecastOos), "forecast");
    require_artifact(cfg.out(artifact::kCalibration), "forecast");
    const auto calj = read_json(cfg.out(artifact::kCalibration));
    const double alpha = calj.at("alpha").get<double>();

    nlohmann::json reports = nlohmann::json::array();
    nlohmann::json coverage = nlohmann::json::object();
    std::ostringstream csv;
    csv << "# " << cfg.provenance() << "\n# " << metrics::kBiasLegend << "\n"
        << "model,dataset,mae,rmse,smape,forecast_bias,pda,n,coverage,out_of_bounds_pct\n";
    auto emit = [&](const metrics::MetricReport& r, const std::optional<conformal::CoverageReport>& cov) {
        reports.push_back(r);
        csv << cfg.name << ',' << metrics::to_string(r.tag) << ',' << format_number(r.mae) << ','
            << format_number(r.rmse) << ',' << format_number(r.smape) << ',' << format_number(r.forecast_bias) << ','
            << format_number(r.pda) << ',' << r.n << ',';
        if (cov) csv << format_number(cov->coverage) << ',' << format_number(100.0 * cov->out_of_bounds_fraction());
        else csv << ',';
        csv << '\n';
    };

    auto evaluate_file = [&](const char* file, metrics::DatasetTag tag) -> std::vector<IntervalRow> {
        const auto rows = read_interval_csv(cfg.out(file));
        std::vector<double> y, p;
        conformal::IntervalForecast iv;
        for (const auto& r : rows) {
            if (!r.actual) continue;
            y.push_back(*r.actual);
            p.push_back(r.point);
            iv.point.push_back(r.point);
            iv.lower.push_back(r.lower);
            iv.upper.push_back(r.upper);
        }
        if (y.size() < 2) return rows;
        const auto cov = conformal::coverage_report(iv, y);
        coverage[std::string(metrics::to_string(tag))] = coverage_json(cov, alpha);
        emit(metrics::metric_report(y, p, tag), cov);
        return rows;
    };
    evaluate_file(artifact::kForecastTest, metrics::DatasetTag::Test);
    const auto oos_rows = evaluate_file(artifact::kForecastOos, metrics::DatasetTag::Forecast);

    nlohmann::json baseline = nlohmann::json::object();
    if (fs::exists(cfg.out(artifact::kImputed)) && cfg.split) {
        const SeriesFrame frame = read_frame(cfg.out(artifact::kImputed), cfg.units);
        const Split parts = split(frame, *cfg.split);
        if (parts.oos.has(cfg.features.target)) {
            const auto& actual_col = parts.oos.column(cfg.features.target).values;
            std::vector<double> y, sim;
            const bool has_sim = parts.oos.has(cfg.simulated_target);
            for (std::size_t i = 0; i < actual_col.size(); ++i) {
                if (!actual_col[i]) continue;
                y.push_back(*actual_col[i]);
                if (has_sim) sim.push_back(*parts.oos.column(cfg.simulated_target).values[i]);
            }
            if (has_sim && y.size() >= 2 && sim.size() == y.size()) {
                emit(metrics::metric_report(y, sim, metrics::DatasetTag::SimulatedVsActual), std::nullopt);
            }
            if (y.size() >= 2) {
                const double last = parts.test.dense(cfg.features.target).back();
                const auto naive = models::persistence_forecast(last, y.size());
                baseline["persistence"] = metrics::metric_report(y, naive, metrics::DatasetTag::Forecast);
            }
        }
    }

    nlohmann::json doc{{"name", cfg.name},
                       {"model", calj.value("model", std::string{})},
                       {"alpha", alpha},
                       {"epsilon", calj.at("epsilon")},
                       {"reports", reports},
                       {"coverage", coverage},
                       {"baseline", baseline},
                       {"bias_legend", metrics::kBiasLegend},
                       {"exchangeability", conformal::kExchangeabilityNote},
                       {"provenance", cfg.provenance_json()}};
    write_atomic(cfg.out(artifact::kMetricsJson), dump_json(doc));
    write_atomic(cfg.out(artifact::kMetricsCsv), csv.str());
    (void)oos_rows;
    return {{cfg.out(artifact::kMetricsJson), cfg.out(artifact::kMetricsCsv)}};
}

/// Side-by-side table over several runs: one row per run with the five
/// metrics for test and forecast data, plus forecast coverage and
/// out-of-bounds percentage. Also a metric-by-column markdown layout.
inline StageResult run_compare(const std::vector<RunConfig>& runs, const fs::path& out_dir) {
    if (runs.empty()) throw StageError("compare needs at least one config");
    static const char* kMetricKeys[] = {"mae", "rmse", "smape", "forecast_bias", "pda"};
    static const char* kMetricNames[] = {"MAE", "RMSE", "sMAPE", "Forecast Bias", "PDA"};
    static const char* kTags[] = {"test", "forecast"};

    std::string joined;
    for (const auto& r : runs) joined += r.config_hash;
    const std::string hash = fnv1a_hex(joined);

    std::vector<nlohmann::json> docs;
    for (const auto& r : runs) {
        require_artifact(r.out(artifact::kMetricsJson), "evaluate");
        docs.push_back(read_json(r.out(artifact::kMetricsJson)));
    }
    auto metric = [](const nlohmann::json& doc, const char* tag, const char* key) -> std::string {
        for (const auto& rep : doc.at("reports")) {
            if (rep.at("tag") == tag) return format_number(rep.at(key).get<double>());
        }
        return "";
    };
    auto cov = [](const nlohmann::json& doc, const char* key) -> std::string {
        if (!doc.at("coverage").contains("forecast")) return "";
        return format_number(doc.at("coverage").at("forecast").at(key).get<double>());
    };

    std::ostringstream csv;
    csv << "# wellcast config_hash=" << hash << " seed=" << runs.front().seed << "\n# " << metrics::kBiasLegend << "\nmodel";
    for (const char* tag : kTags)
        for (const char* key : kMetricKeys) csv << ',' << tag << '_' << key;
    csv << ",coverage,out_of_bounds_pct\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        csv << runs[i].name;
        for (const char* tag : kTags)
            for (const char* key : kMetricKeys) csv << ',' << metric(docs[i], tag, key);
        csv << ',' << cov(docs[i], "coverage") << ',' << cov(docs[i], "out_of_bounds_pct") << '\n';
    }

    std::ostringstream md;
    md << "<!-- wellcast config_hash=" << hash << " seed=" << runs.front().seed << " -->\n\n| Metric |";
    for (const auto& r : runs) md << ' ' << r.name << " (Test Data) | " << r.name << " (Forecast Data) |";
    md << "\n|---|";
    for (std::size_t i = 0; i < runs.size(); ++i) md << "---|---|";
    md << '\n';
    for (std::size_t k = 0; k < 5; ++k) {
        md << "| " << kMetricNames[k] << " |";
        for (const auto& d : docs) md << ' ' << metric(d, "test", kMetricKeys[k]) << " | " << metric(d, "forecast", kMetricKeys[k]) << " |";
        md << '\n';
    }
    md << "| Coverage |";
    for (const auto& d : docs) md << "  | " << cov(d, "coverage") << " |";
    md << "\n| Out of bounds % |";
    for (const auto& d : docs) md << "  | " << cov(d, "out_of_bounds_pct") << " |";
    md << "\n\n" << metrics::kBiasLegend << "\n";

    write_atomic(out_dir / artifact::kComparisonCsv, csv.str());
    write_atomic(out_dir / artifact::kComparisonMd, md.str());
    return {{out_dir / artifact::kComparisonCsv, out_dir / artifact::kComparisonMd}};
}

}  // namespace wellcast::pipeline
