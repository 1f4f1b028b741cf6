#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wellcast/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
namespace wp = wellcast::pipeline;

constexpr int kStageFailure = 2;

std::size_t thread_count() {
    if (const char* env = std::getenv("WELLCAST_THREADS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
        }
        std::cerr << "wellcast: ignoring WELLCAST_THREADS='" << env << "'\n";
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wellcast: daily well production forecasting with conformal intervals"};
    app.require_subcommand(1);

    std::vector<std::string> configs;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    const char* stages[] = {"synth", "impute", "changepoints", "train", "forecast", "evaluate", "compare"};
    for (const char* name : stages) {
        CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
        auto* opt = sub->add_option("--config", configs, "run config JSON")->required();
        if (std::string(name) != "compare") opt->expected(1);
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "seed override");
    }
    CLI11_PARSE(app, argc, argv);

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        std::vector<wp::RunConfig> runs;
        for (const auto& path : configs) {
            std::optional<fs::path> out;
            if (out_dir && stage != "compare") out = fs::path(*out_dir);
            runs.push_back(wp::load_run_config(path, out, seed));
        }
        const wp::RunConfig& cfg = runs.front();

        wp::StageResult result;
        if (stage == "synth") result = wp::run_synth(cfg);
        else if (stage == "impute") result = wp::run_impute(cfg);
        else if (stage == "changepoints") result = wp::run_changepoints(cfg);
        else if (stage == "train") result = wp::run_train(cfg, thread_count());
        else if (stage == "forecast") result = wp::run_forecast(cfg);
        else if (stage == "evaluate") result = wp::run_evaluate(cfg);
        else result = wp::run_compare(runs, out_dir ? fs::path(*out_dir) : cfg.output_dir);

        for (const auto& p : result.artifacts) std::cout << p.string() << '\n';
        return 0;
    } catch (const wellcast::Error& e) {
        std::cerr << "wellcast " << stage << ": " << e.what() << '\n';
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "wellcast " << stage << ": malformed JSON: " << e.what() << '\n';
    } catch (const fs::filesystem_error& e) {
        std::cerr << "wellcast " << stage << ": " << e.what() << '\n';
    }
    return kStageFailure;
}
