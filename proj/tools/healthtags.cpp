// healthtags: command-line driver for the county health-statistics pipeline.
//
//   healthtags synth --output data/
//   healthtags ingest --config data/config.json
//   healthtags geotag --config data/config.json
//   ...
//
// Exit codes: 0 success, 1 usage or config error, 2 data validation failure,
// 3 external-service failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "healthtags/error.hpp"
#include "healthtags/pipeline.hpp"

namespace fs = std::filesystem;
using namespace healthtags;

namespace {

struct Args {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output;
    bool force = false;
    bool quiet = false;
};

PipelineConfig effective_config(const Args& args) {
    if (args.config.empty()) throw ConfigError("--config is required for this subcommand");
    auto config = load_config(args.config);
    if (args.seed) config.seed = *args.seed;
    if (!args.output.empty()) config.output_dir = fs::absolute(args.output).lexically_normal();
    config.validate();
    return config;
}

int run_synth_command(const Args& args) {
    std::string text;
    if (!args.config.empty()) {
        std::ifstream in(args.config, std::ios::binary);
        if (!in) throw ConfigError("cannot read " + args.config);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    auto spec = parse_synth_spec(text);
    if (args.seed) spec.seed = *args.seed;
    const fs::path dir = args.output.empty() ? fs::path("synth_data") : fs::path(args.output);
    const auto config = run_synth(spec, dir);
    if (!args.quiet) fmt::print(stderr, "[synth] wrote dataset and {}\n", config.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predict county health statistics from image tags"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    Args args;
    app.add_option("--config", args.config, "Pipeline config (JSON)");
    app.add_option("--seed", args.seed, "Seed override for sampling, folds and synthesis");
    app.add_option("--output", args.output, "Output directory override");
    app.add_flag("--force", args.force, "Recompute even when a stage's inputs are unchanged");
    app.add_flag("--quiet", args.quiet, "Suppress progress messages");

    const std::pair<const char*, const char*> stages[] = {
        {"ingest", "Validate image metadata, health and demographics inputs"},
        {"geotag", "Resolve image coordinates to county FIPS codes"},
        {"tag", "Select top counties, sample images and fetch machine tags"},
        {"featurize", "Build the U, I and D feature matrices"},
        {"evaluate", "Cross-validate ridge models for every statistic and feature set"},
        {"sweep", "Choose the machine-tag confidence threshold by macro-averaged r"},
        {"report", "Emit the results grid, scatter data and feature charts"},
    };
    for (const auto& [name, help] : stages) app.add_subcommand(name, help);
    auto* run_all = app.add_subcommand("run", "Run ingest through report in sequence");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a planted signal");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return run_synth_command(args);
        const auto config = effective_config(args);
        const StageOptions options{args.force, args.quiet};
        if (run_all->parsed()) {
            for (const auto& outcome : run_pipeline(config, options))
                if (outcome.exit_code != 0) return outcome.exit_code;
            return 0;
        }
        for (auto* sub : app.get_subcommands()) {
            auto stage = parse_stage(sub->get_name());
            if (!stage) continue;
            return run_stage(*stage, config, options).exit_code;
        }
        return 1;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code_for(e);
    }
}
