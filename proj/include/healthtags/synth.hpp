#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "healthtags/geo.hpp"
#include "healthtags/ingest.hpp"
#include "healthtags/types.hpp"

namespace healthtags {

struct ConfidenceBand {
    double low = 0.0;
    double high = 0.0;
};

/// Parameters of a synthetic corpus. Every county gets exactly
/// `images_per_county` images. Signal-tag propensities follow a small number
/// of latent county factors plus idiosyncratic variation; the planted
/// statistic is an exact linear function of the realized, L2-normalized
/// machine-tag count vector plus Gaussian noise.
struct SynthSpec {
    std::size_t n_counties = 100;
    std::size_t images_per_county = 2000;
    std::size_t n_signal_tags = 50;
    std::size_t n_noise_tags = 200;
    std::size_t n_user_tags = 150;

    HealthStat planted_stat = HealthStat::obese;
    /// Empty: drawn from N(0,1) and rescaled so the signal has sd `signal_sd`.
    /// Otherwise used as given (length must equal n_signal_tags).
    std::vector<double> weights;
    double signal_sd = 5.0;
    double noise_std = 0.1;

    ConfidenceBand signal_confidence{85.0, 95.0};
    ConfidenceBand noise_confidence{8.0, 12.0};
    /// Machine tags must score above this to count toward the planted vector.
    double planting_threshold = 20.0;

    double signal_rate = 0.1;       // baseline per-image probability of a signal tag
    double noise_rate = 0.02;       // per-image probability of a noise tag
    std::size_t latent_factors = 3;
    double factor_strength = 1.0;   // sd of the factor part of log-propensity
    double idiosyncratic = 1.0;     // sd of the per-(county, tag) part
    double user_tagged_fraction = 0.5;

    std::uint64_t seed = 1;

    /// Throws ConfigError on inconsistent parameters.
    void validate() const;
};

struct SynthCounty {
    FipsCode fips;
    std::string name;
    CountyRect rect;
};

struct ExpectedSignal {
    HealthStat planted_stat = HealthStat::obese;
    std::vector<std::string> signal_tags;  // lexicographic
    std::vector<double> weights;           // aligned with signal_tags
    double intercept = 0.0;
    double noise_std = 0.0;
    double achievable_r = 0.0;  // corr(y, w·x) over the realized counties; 0 when w = 0
    double planting_threshold = 0.0;
    std::uint64_t seed = 0;
};

struct SynthDataset {
    std::vector<SynthCounty> counties;
    std::vector<ImageRecord> images;
    HealthStatTable health;
    DemographicsTable demographics;
    ExpectedSignal expected;
};

SynthDataset generate(const SynthSpec& spec);

struct SynthFiles {
    std::filesystem::path images;        // images.jsonl
    std::filesystem::path health;        // health.csv
    std::filesystem::path demographics;  // demographics.csv
    std::filesystem::path geo_fixture;   // counties.csv (rectangles)
    std::filesystem::path county_names;  // county_names.csv
    std::filesystem::path expected;      // expected_signal.json
};

/// Writes every artifact under `dir` (created if needed).
SynthFiles write_dataset(const SynthDataset& data, const std::filesystem::path& dir);

std::string expected_signal_json(const ExpectedSignal& e);

}  // namespace healthtags
