#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "wellcast/pipeline.hpp"

using namespace wellcast;
namespace wp = wellcast::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("wellcast_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// 300 synthetic days, last 60 held out, small GBT grid: runs in well under a second.
json small_config(const std::string& kind = "gbt") {
    const Date start = Date::from_ymd(2020, 1, 1);
    json model = kind == "gbt"
                     ? json{{"kind", "gbt"},
                            {"grid", {{"rounds", {30}}, {"max_depth", {2, 3}}, {"learning_rate", {0.1}}}}}
                     : json{{"kind", kind},
                            {"grid",
                             {{"hidden_units", {4}}, {"learning_rate", {0.01}}, {"epochs", {3}}, {"batch_size", {32}}}}};
    return json{{"name", kind},
                {"input_csv", "well.csv"},
                {"output_dir", "out"},
                {"seed", 7},
                {"features", {{"target", "OPR_H"}, {"exogenous", {"WPR_H", "GPR_H", "BHP_H"}}, {"lookback", 7}}},
                {"split",
                 {{"train_fraction", 0.8},
                  {"oos_start", (start + 240).to_string()},
                  {"oos_end", (start + 299).to_string()}}},
                {"model", model},
                {"synth",
                 {{"n_days", 300},
                  {"physics", {{"bhp_period", 20}, {"bhp_jitter", 0.08}, {"start", start.to_string()}}},
                  {"interventions", {{{"day", 120}, {"bhp_shift", -300}}}}}}};
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& file = "run.json") {
    std::ofstream(dir / file) << j.dump(2);
    return dir / file;
}

void run_all(const wp::RunConfig& cfg) {
    wp::run_synth(cfg);
    wp::run_impute(cfg);
    wp::run_changepoints(cfg);
    wp::run_train(cfg, 1);
    wp::run_forecast(cfg);
    wp::run_evaluate(cfg);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(WELLCAST_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfig, Defaults) {
    const auto cfg = wp::parse_run_config(json{{"input_csv", "a.csv"}}, "/base");
    EXPECT_EQ(cfg.input_csv, fs::path("/base/a.csv"));
    EXPECT_EQ(cfg.output_dir, fs::path("/base/out"));
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.alpha, 0.05);
    EXPECT_EQ(cfg.features.target, "OPR_H");
    EXPECT_EQ(cfg.features.lookback, 30u);
    EXPECT_EQ(cfg.feed, models::TargetFeed::Recursive);
    EXPECT_EQ(cfg.impute_k, 5u);
    EXPECT_EQ(cfg.changepoints.column, "OPR_H");
    EXPECT_TRUE(cfg.blind_calibration);
    EXPECT_FALSE(cfg.split.has_value());
    EXPECT_EQ(cfg.name, "lstm");
    EXPECT_EQ(cfg.config_hash.size(), 16u);
}

TEST(RunConfig, SchemaViolations) {
    EXPECT_THROW(wp::parse_run_config(json::object(), "."), SchemaError);
    EXPECT_THROW(wp::parse_run_config(json{{"input_csv", "a"}, {"bogus", 1}}, "."), SchemaError);
    EXPECT_THROW(wp::parse_run_config(json{{"input_csv", "a"}, {"alpha", 1.5}}, "."), SchemaError);
    EXPECT_THROW(wp::parse_run_config(json{{"input_csv", "a"}, {"model", {{"kind", "transformer"}}}}, "."),
                 SchemaError);
    json same = {{"input_csv", "a"}, {"features", {{"target", "OPR_H"}, {"exogenous", {"OPR_H"}}}}};
    EXPECT_THROW(wp::parse_run_config(same, "."), SchemaError);
}

TEST(RunConfig, HashIgnoresOutputButTracksSeed) {
    const json j = small_config();
    const auto a = wp::parse_run_config(j, ".");
    const auto b = wp::parse_run_config(j, ".", fs::path("/elsewhere"));
    EXPECT_EQ(a.config_hash, b.config_hash);
    EXPECT_EQ(b.output_dir, fs::path("/elsewhere"));
    const auto c = wp::parse_run_config(j, ".", std::nullopt, 8);
    EXPECT_EQ(c.seed, 8u);
    EXPECT_NE(a.config_hash, c.config_hash);
    EXPECT_EQ(c.synth->physics.seed, 8u);
}

TEST(RunConfig, SchemaFileMatchesEmbedded) {
    const json file = json::parse(slurp(fs::path(WELLCAST_SOURCE_DIR) / "schemas" / "run_config.schema.json"));
    EXPECT_EQ(file, json::parse(wellcast::kRunConfigSchema));
}

TEST(RunConfig, ShippedDemoValidates) {
    const auto cfg = wp::load_run_config(fs::path(WELLCAST_SOURCE_DIR) / "configs" / "demo.json");
    EXPECT_EQ(cfg.model.kind, models::ModelKind::LSTM);
    EXPECT_TRUE(cfg.synth.has_value());
}

TEST(Pipeline, EndToEndArtifacts) {
    const fs::path dir = scratch("e2e");
    const auto cfg = wp::load_run_config(write_config(dir, small_config()));
    run_all(cfg);
    for (const char* f : {wp::artifact::kImputed, wp::artifact::kChangepoints, wp::artifact::kSegments,
                          wp::artifact::kModel, wp::artifact::kLoss, wp::artifact::kLeaderboard,
                          wp::artifact::kForecastTest, wp::artifact::kForecastOos, wp::artifact::kCalibration,
                          wp::artifact::kMetricsJson, wp::artifact::kMetricsCsv}) {
        ASSERT_TRUE(fs::exists(cfg.out(f))) << f;
        const std::string text = slurp(cfg.out(f));
        EXPECT_NE(text.find(cfg.config_hash), std::string::npos) << f << " lacks provenance";
    }
    const auto oos = wp::read_interval_csv(cfg.out(wp::artifact::kForecastOos));
    EXPECT_EQ(oos.size(), 60u);
    const auto cal = wp::read_json(cfg.out(wp::artifact::kCalibration));
    EXPECT_EQ(cal.at("n_cal").get<std::size_t>(), 48u);
    EXPECT_EQ(cal.at("residuals"), "blind");
    for (const auto& r : oos) {
        EXPECT_NEAR(r.upper - r.point, cal.at("epsilon").get<double>(), 1e-9);
        EXPECT_NEAR(r.point - r.lower, cal.at("epsilon").get<double>(), 1e-9);
    }
    const auto metrics = wp::read_json(cfg.out(wp::artifact::kMetricsJson));
    EXPECT_TRUE(metrics.at("coverage").contains("forecast"));
    EXPECT_TRUE(metrics.at("baseline").contains("persistence"));
}

TEST(Pipeline, ByteIdenticalRerun) {
    const fs::path dir = scratch("rerun");
    const fs::path cfg_path = write_config(dir, small_config("lstm"));
    const auto a = wp::load_run_config(cfg_path, dir / "a");
    const auto b = wp::load_run_config(cfg_path, dir / "b");
    run_all(a);
    run_all(b);
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename())) << e.path().filename();
    }
}

TEST(Pipeline, ForecastIgnoresOosTarget) {
    const fs::path dir = scratch("tamper");
    const auto cfg = wp::load_run_config(write_config(dir, small_config()));
    run_all(cfg);
    const auto model = wp::load_model(cfg);
    const auto frame = wp::load_imputed(cfg);
    const auto clean = wp::compute_forecasts(cfg, model, wp::split_frame(cfg, frame));

    auto parts = wp::split_frame(cfg, frame);
    for (auto& v : parts.oos.column("OPR_H").values) v = std::nullopt;
    const auto blanked = wp::compute_forecasts(cfg, model, parts);
    for (auto& v : parts.oos.column("OPR_H").values) v = 1e9;
    const auto poisoned = wp::compute_forecasts(cfg, model, parts);
    EXPECT_EQ(clean.oos_point, blanked.oos_point);
    EXPECT_EQ(clean.oos_point, poisoned.oos_point);
    EXPECT_EQ(clean.test_point, poisoned.test_point);
}

TEST(Pipeline, PerfectForecastsEvaluateCleanly) {
    const fs::path dir = scratch("perfect");
    const auto cfg = wp::load_run_config(write_config(dir, small_config()));
    fs::create_directories(cfg.output_dir);
    std::vector<wp::IntervalRow> rows;
    for (int i = 0; i < 30; ++i) {
        const double y = 500.0 + i;
        rows.push_back({Date::from_ymd(2021, 1, 1) + i, y, y - 1.0, y + 1.0, y});
    }
    wp::write_atomic(cfg.out(wp::artifact::kForecastTest), wp::interval_csv(cfg, rows));
    wp::write_atomic(cfg.out(wp::artifact::kForecastOos), wp::interval_csv(cfg, rows));
    wp::write_atomic(cfg.out(wp::artifact::kCalibration), wp::dump_json(json{{"alpha", 0.05}, {"epsilon", 1.0}}));
    wp::run_evaluate(cfg);
    const auto doc = wp::read_json(cfg.out(wp::artifact::kMetricsJson));
    for (const auto& r : doc.at("reports")) {
        EXPECT_EQ(r.at("mae").get<double>(), 0.0);
        EXPECT_EQ(r.at("rmse").get<double>(), 0.0);
        EXPECT_EQ(r.at("smape").get<double>(), 0.0);
        EXPECT_EQ(r.at("forecast_bias").get<double>(), 0.0);
        EXPECT_EQ(r.at("pda").get<double>(), 100.0);
    }
    EXPECT_EQ(doc.at("coverage").at("forecast").at("coverage").get<double>(), 1.0);
    EXPECT_FALSE(doc.at("coverage").at("forecast").at("shortfall").get<bool>());
}

TEST(Pipeline, CompareFourRuns) {
    const fs::path dir = scratch("compare");
    std::vector<wp::RunConfig> runs;
    for (const char* kind : {"gbt", "lstm", "bilstm", "gru"}) {
        json j = small_config(kind);
        j["output_dir"] = std::string("out_") + kind;
        runs.push_back(wp::load_run_config(write_config(dir, j, std::string(kind) + ".json")));
        run_all(runs.back());
    }
    wp::run_compare(runs, dir / "cmp");
    std::ifstream in(dir / "cmp" / wp::artifact::kComparisonCsv);
    std::string line;
    std::vector<std::string> body;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') body.push_back(line);
    }
    ASSERT_EQ(body.size(), 5u);
    EXPECT_EQ(body[0].rfind("model,test_mae,", 0), 0u);
    EXPECT_EQ(body[1].rfind("gbt,", 0), 0u);
    EXPECT_EQ(body[4].rfind("gru,", 0), 0u);
    const std::string md = slurp(dir / "cmp" / wp::artifact::kComparisonMd);
    EXPECT_NE(md.find("| Forecast Bias |"), std::string::npos);
}

TEST(Pipeline, MissingUpstreamIsStageError) {
    const fs::path dir = scratch("upstream");
    const auto cfg = wp::load_run_config(write_config(dir, small_config()));
    EXPECT_THROW(wp::run_train(cfg), StageError);
    EXPECT_THROW(wp::run_forecast(cfg), StageError);
    EXPECT_THROW(wp::run_evaluate(cfg), StageError);
}

TEST(Pipeline, StaleModelRejected) {
    const fs::path dir = scratch("stale");
    json j = small_config();
    const auto cfg = wp::load_run_config(write_config(dir, j));
    run_all(cfg);
    j["features"]["lookback"] = 5;
    const auto changed = wp::load_run_config(write_config(dir, j));
    EXPECT_THROW(wp::run_forecast(changed), StageError);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    const fs::path cfg = write_config(dir, small_config());
    const std::string base = " --config " + cfg.string();
    EXPECT_EQ(run_cli("forecast" + base), 2);  // nothing upstream yet
    for (const char* stage : {"synth", "impute", "changepoints", "train", "forecast", "evaluate"}) {
        EXPECT_EQ(run_cli(std::string(stage) + base), 0) << stage;
    }
    EXPECT_EQ(run_cli("compare" + base + " --config " + cfg.string() + " --out " + (dir / "cmp").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "cmp" / wp::artifact::kComparisonCsv));

    std::ofstream(dir / "bad.json") << R"({"input_csv": "x.csv", "alpha": 3})";
    EXPECT_EQ(run_cli("impute --config " + (dir / "bad.json").string()), 2);
    EXPECT_EQ(run_cli("impute --config " + (dir / "absent.json").string()), 2);
    EXPECT_NE(run_cli("explode" + base), 0);
}

TEST(Cli, SeedOverrideChangesProvenance) {
    const fs::path dir = scratch("cli_seed");
    const fs::path cfg = write_config(dir, small_config());
    ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --seed 99 --out " + (dir / "o").string()), 0);
    const auto p = wp::load_run_config(cfg, std::nullopt, 99);
    const std::string text = slurp(p.input_csv);
    EXPECT_NE(text.find("seed=99"), std::string::npos);
    EXPECT_NE(text.find(p.config_hash), std::string::npos);
}
