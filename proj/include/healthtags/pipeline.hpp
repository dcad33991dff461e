#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthtags/eval.hpp"
#include "healthtags/features.hpp"
#include "healthtags/ingest.hpp"
#include "healthtags/synth.hpp"

namespace healthtags {

struct GeoConfig {
    std::string backend = "offline";  // offline | remote
    std::filesystem::path fixture;    // rectangle CSV for the offline backend
    std::string base_url;
    std::string fips_path = "County.FIPS";
    std::optional<std::filesystem::path> cache;  // remote default: <output>/geo_cache.jsonl
    std::size_t max_in_flight = 4;
    double queries_per_second = 10.0;
    int retry_attempts = 3;
    int initial_backoff_ms = 1000;
};

struct TaggerConfig {
    std::string backend = "none";  // none | fixture | remote
    std::filesystem::path fixture;
    std::string base_url;
    std::optional<std::filesystem::path> credentials;  // HEALTHTAGS_TAGGER_CREDENTIALS overrides
    std::string image_url_template = "{id}";
    std::size_t max_in_flight = 4;
    double queries_per_second = 5.0;
    int retry_attempts = 3;
    int initial_backoff_ms = 1000;
};

struct PipelineConfig {
    std::filesystem::path images;
    std::filesystem::path health;
    std::filesystem::path demographics;
    std::optional<std::filesystem::path> county_names;

    GeoConfig geo;
    TaggerConfig tagger;

    std::size_t n_top_counties = 100;
    std::size_t images_per_county = 2000;
    double confidence_threshold = 20.0;
    std::size_t min_county_support = 10;
    double alpha = 0.1;
    std::size_t k_folds = 10;
    std::uint64_t seed = 0;

    std::vector<FeatureSet> feature_sets;  // default: all six
    std::vector<HealthStat> statistics;    // default: all nine
    std::vector<double> sweep_thresholds;  // default: 5, 10, ..., 60
    PairedTest paired_test = PairedTest::dependent;
    std::size_t label_top = 3;
    std::size_t top_features = 10;

    std::filesystem::path output_dir = "out";

    PipelineConfig();

    /// Throws ConfigError naming the offending key.
    void validate() const;
    /// Canonical JSON (sorted keys, paths as given) used for hashing.
    std::string canonical_json() const;
};

/// Keys that must be present in every config file: the study constants are
/// never filled in silently.
inline constexpr std::string_view kRequiredConfigKeys[] = {
    "n_top_counties", "images_per_county", "confidence_threshold",
    "min_county_support", "alpha", "k_folds",
};

/// Parses a config document. Relative paths are resolved against `base_dir`.
/// Unknown keys, missing required keys and out-of-range values throw ConfigError.
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Config file matching the fields above, with paths relative to its own directory.
std::string config_json(const PipelineConfig& config, const std::filesystem::path& relative_to);

enum class Stage { ingest, geotag, tag, featurize, evaluate, sweep, report };

std::string_view stage_name(Stage stage) noexcept;
std::optional<Stage> parse_stage(std::string_view name) noexcept;

struct StageOutcome {
    Stage stage = Stage::ingest;
    bool reused = false;  // inputs and outputs matched the stamp; nothing recomputed
    std::vector<std::filesystem::path> artifacts;
    std::vector<std::string> warnings;
    int exit_code = 0;  // 3 when some external lookups failed but artifacts were written
};

struct StageOptions {
    bool force = false;
    bool quiet = false;
};

/// Runs one stage: reads the previous stage's artifacts from the output
/// directory, writes its own, refreshes run_metadata.json and the stage stamp.
/// Throws ConfigError / DataError / ServiceError.
StageOutcome run_stage(Stage stage, const PipelineConfig& config, const StageOptions& options = {});

/// ingest, geotag, tag, featurize, evaluate, report. Stops at the first
/// non-zero exit code.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, const StageOptions& options = {});

/// Options for the synth subcommand, read from the optional "synth" section.
SynthSpec parse_synth_spec(std::string_view json_text);

/// Generates a dataset under `dir` and writes `dir/config.json` pointing at it
/// with the study defaults, offline geo fixture and output directory `run`.
std::filesystem::path run_synth(const SynthSpec& spec, const std::filesystem::path& dir);

/// 0 success, 1 config/usage, 2 data validation, 3 external service.
int exit_code_for(const std::exception& e) noexcept;

/// FNV-1a 64-bit, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace healthtags
