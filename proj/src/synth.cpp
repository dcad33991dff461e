#include "healthtags/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "healthtags/error.hpp"

namespace healthtags {

using nlohmann::json;

namespace {

struct StatProfile {
    HealthStat stat;
    double mean;
};

// Rough national means; they only set the scale of each synthetic column.
constexpr StatProfile kProfiles[] = {
    {HealthStat::smokers, 18.0},
    {HealthStat::obese, 30.0},
    {HealthStat::food_env_index, 7.5},
    {HealthStat::physically_inactive, 25.0},
    {HealthStat::excessive_drinking, 17.0},
    {HealthStat::alcohol_impaired_driving_deaths, 30.0},
    {HealthStat::diabetic, 11.0},
    {HealthStat::food_insecure, 14.0},
    {HealthStat::limited_access_healthy_food, 8.0},
};

void check_band(const ConfidenceBand& band, const char* what) {
    if (!(band.low >= 0.0 && band.high <= 100.0 && band.low <= band.high))
        throw ConfigError(fmt::format("{} confidence band [{}, {}] must lie within [0, 100]", what, band.low,
                                      band.high));
}

FipsCode county_fips(std::size_t c) {
    // Up to 100 counties per synthetic state; odd county numbers as in real FIPS.
    const auto state = c / 100 + 1;
    const auto county = (c % 100) * 2 + 1;
    return FipsCode::parse(fmt::format("{:02d}{:03d}", state, county));
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

double sample_sd(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

}  // namespace

void SynthSpec::validate() const {
    if (n_counties == 0 || n_counties > 9900) throw ConfigError("n_counties must be in [1, 9900]");
    if (images_per_county == 0) throw ConfigError("images_per_county must be positive");
    if (n_signal_tags == 0) throw ConfigError("n_signal_tags must be positive");
    if (!weights.empty() && weights.size() != n_signal_tags)
        throw ConfigError(fmt::format("weights has {} entries, expected n_signal_tags = {}", weights.size(),
                                      n_signal_tags));
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (!(signal_sd >= 0.0)) throw ConfigError("signal_sd must be >= 0");
    check_band(signal_confidence, "signal");
    check_band(noise_confidence, "noise");
    if (!(signal_confidence.low > planting_threshold))
        throw ConfigError("signal confidence band must lie above the planting threshold");
    for (double r : {signal_rate, noise_rate, user_tagged_fraction})
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("rates must lie in [0, 1]");
    if (latent_factors == 0) throw ConfigError("latent_factors must be positive");
}

SynthDataset generate(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t nc = spec.n_counties;
    const std::size_t m = spec.images_per_county;

    SynthDataset out;

    // Names are zero-padded so lexicographic order is index order.
    std::vector<std::string> signal_tags, noise_tags, user_tags;
    for (std::size_t t = 0; t < spec.n_signal_tags; ++t) signal_tags.push_back(fmt::format("sig_{:03d}", t));
    for (std::size_t t = 0; t < spec.n_noise_tags; ++t) noise_tags.push_back(fmt::format("noise_{:03d}", t));
    for (std::size_t t = 0; t < spec.n_user_tags; ++t) user_tags.push_back(fmt::format("u_{:03d}", t));

    // Latent county factors and loadings.
    const std::size_t nf = spec.latent_factors;
    std::vector<std::vector<double>> factors(nc, std::vector<double>(nf));
    for (auto& f : factors)
        for (auto& v : f) v = gauss(rng);
    auto loadings = [&](std::size_t n_tags) {
        std::vector<std::vector<double>> l(n_tags, std::vector<double>(nf));
        for (auto& row : l)
            for (auto& v : row) v = gauss(rng);
        return l;
    };
    const auto signal_load = loadings(signal_tags.size());
    const auto user_load = loadings(user_tags.size());

    auto propensity = [&](double base, const std::vector<double>& load, const std::vector<double>& f) {
        double dot = 0;
        for (std::size_t k = 0; k < nf; ++k) dot += load[k] * f[k];
        const double logp = std::log(base) + spec.factor_strength * dot / std::sqrt(static_cast<double>(nf)) +
                            spec.idiosyncratic * gauss(rng);
        return std::clamp(std::exp(logp), 0.0, 0.9);
    };

    // Signal counts (above the planting threshold) per county; the planted
    // vector is their L2 normalization.
    std::vector<std::vector<double>> x(nc, std::vector<double>(signal_tags.size(), 0.0));
    std::vector<std::vector<double>> noise_x(nc, std::vector<double>(noise_tags.size(), 0.0));
    const bool noise_counts = spec.noise_confidence.high > spec.planting_threshold;

    constexpr std::int64_t kEpoch = 1420070400;  // 2015-01-01T00:00:00Z
    constexpr std::int64_t kYear = 365LL * 24 * 3600;

    for (std::size_t c = 0; c < nc; ++c) {
        const auto fips = county_fips(c);
        const double lat0 = 30.0 + static_cast<double>(c / 100) * 0.5;
        const double lon0 = -125.0 + static_cast<double>(c % 100) * 0.5;
        SynthCounty county{fips, fmt::format("Synthetic County {:04d}", c + 1),
                           CountyRect{lat0, lat0 + 0.5, lon0, lon0 + 0.5, fips}};

        std::vector<double> p_signal(signal_tags.size()), p_user(user_tags.size());
        for (std::size_t t = 0; t < signal_tags.size(); ++t)
            p_signal[t] = propensity(spec.signal_rate, signal_load[t], factors[c]);
        for (std::size_t t = 0; t < user_tags.size(); ++t)
            p_user[t] = propensity(0.01, user_load[t], factors[c]);
        std::discrete_distribution<std::size_t> pick_user(p_user.begin(), p_user.end());

        std::vector<ImageRecord> images(m);
        for (std::size_t i = 0; i < m; ++i) {
            auto& img = images[i];
            img.id = fmt::format("img_{}_{:05d}", county.fips.str(), i);
            img.point = {lat0 + 0.01 + 0.48 * unit(rng), lon0 + 0.01 + 0.48 * unit(rng)};
            img.point.latitude = std::round(img.point.latitude * 1e6) / 1e6;
            img.point.longitude = std::round(img.point.longitude * 1e6) / 1e6;
            img.timestamp = kEpoch + static_cast<std::int64_t>(unit(rng) * static_cast<double>(kYear));
            img.machine_tags.emplace();
        }

        for (std::size_t t = 0; t < signal_tags.size(); ++t) {
            std::bernoulli_distribution has(p_signal[t]);
            bool seen = false;
            for (std::size_t i = 0; i < m; ++i) {
                if (!has(rng)) continue;
                seen = true;
                images[i].machine_tags->push_back({signal_tags[t], round1(spec.signal_confidence.low +
                    (spec.signal_confidence.high - spec.signal_confidence.low) * unit(rng))});
            }
            // Every signal tag occurs in every county, so support filtering never removes it.
            if (!seen)
                images[t % m].machine_tags->push_back({signal_tags[t], round1(spec.signal_confidence.high)});
        }
        std::bernoulli_distribution has_noise(spec.noise_rate);
        for (std::size_t t = 0; t < noise_tags.size(); ++t) {
            for (std::size_t i = 0; i < m; ++i) {
                if (!has_noise(rng)) continue;
                images[i].machine_tags->push_back({noise_tags[t], round1(spec.noise_confidence.low +
                    (spec.noise_confidence.high - spec.noise_confidence.low) * unit(rng))});
            }
        }
        std::bernoulli_distribution has_user(spec.user_tagged_fraction);
        std::uniform_int_distribution<int> n_user(1, 3);
        for (auto& img : images) {
            if (!user_tags.empty() && has_user(rng)) {
                const int k = n_user(rng);
                for (int j = 0; j < k; ++j) img.user_tags.push_back(user_tags[pick_user(rng)]);
                std::sort(img.user_tags.begin(), img.user_tags.end());
                img.user_tags.erase(std::unique(img.user_tags.begin(), img.user_tags.end()), img.user_tags.end());
            }
            // Image-level presence: a tag counts once per image.
            std::vector<std::string> counted;
            for (const auto& mt : *img.machine_tags) {
                if (!(mt.confidence > spec.planting_threshold)) continue;
                if (std::find(counted.begin(), counted.end(), mt.tag) != counted.end()) continue;
                counted.push_back(mt.tag);
                if (mt.tag.starts_with("sig_"))
                    x[c][static_cast<std::size_t>(std::stoul(mt.tag.substr(4)))] += 1.0;
                else if (noise_counts)
                    noise_x[c][static_cast<std::size_t>(std::stoul(mt.tag.substr(6)))] += 1.0;
            }
        }
        double norm2 = 0;
        for (double v : x[c]) norm2 += v * v;
        for (double v : noise_x[c]) norm2 += v * v;
        const double norm = std::sqrt(norm2);
        if (norm > 0)
            for (double& v : x[c]) v /= norm;

        std::move(images.begin(), images.end(), std::back_inserter(out.images));
        out.counties.push_back(std::move(county));
    }

    // Planted weights.
    std::vector<double> w = spec.weights;
    if (w.empty()) {
        w.resize(signal_tags.size());
        for (auto& v : w) v = gauss(rng);
        std::vector<double> s(nc);
        for (std::size_t c = 0; c < nc; ++c) s[c] = std::inner_product(w.begin(), w.end(), x[c].begin(), 0.0);
        const double sd = sample_sd(s);
        const double scale = sd > 0 ? spec.signal_sd / sd : 0.0;
        for (auto& v : w) v *= scale;
    }

    // Health statistics: the planted one uses w, the others a seeded
    // permutation of it, each rescaled to its own column mean.
    const double planted_mean = kProfiles[static_cast<std::size_t>(spec.planted_stat)].mean;
    std::vector<double> planted_signal(nc), planted_y(nc);
    for (const auto& profile : kProfiles) {
        std::vector<double> ws = w;
        double unit_scale = 1.0;
        if (profile.stat != spec.planted_stat) {
            std::shuffle(ws.begin(), ws.end(), rng);
            unit_scale = profile.mean / planted_mean;
        }
        for (std::size_t c = 0; c < nc; ++c) {
            const double signal = std::inner_product(ws.begin(), ws.end(), x[c].begin(), 0.0);
            const double y = profile.mean + unit_scale * (signal + spec.noise_std * gauss(rng));
            out.health.insert(out.counties[c].fips, profile.stat, y);
            if (profile.stat == spec.planted_stat) {
                planted_signal[c] = signal;
                planted_y[c] = y;
            }
        }
    }

    // Demographics driven by the first latent factors, never by the health noise.
    out.demographics.columns.assign(kDefaultDemographicColumns.begin(), kDefaultDemographicColumns.end());
    for (std::size_t c = 0; c < nc; ++c) {
        const auto& f = factors[c];
        auto mix = [&](std::size_t k) { return 0.6 * f[k % nf] + 0.8 * gauss(rng); };
        out.demographics.rows[out.counties[c].fips] = {
            23.0 + 2.0 * mix(0),
            15.0 + 3.0 * mix(1),
            50.5 + 1.0 * mix(2),
            std::clamp(25.0 + 10.0 * mix(0), 0.0, 100.0),
            10.8 + 0.25 * mix(1),
        };
    }

    auto& e = out.expected;
    e.planted_stat = spec.planted_stat;
    e.signal_tags = signal_tags;
    e.weights = w;
    e.intercept = planted_mean;
    e.noise_std = spec.noise_std;
    e.achievable_r = pearson(planted_signal, planted_y);
    e.planting_threshold = spec.planting_threshold;
    e.seed = spec.seed;
    return out;
}

std::string expected_signal_json(const ExpectedSignal& e) {
    json weights = json::object();
    for (std::size_t i = 0; i < e.signal_tags.size(); ++i) weights[e.signal_tags[i]] = e.weights[i];
    json doc{{"planted_stat", std::string(stat_name(e.planted_stat))},
             {"block", "I"},
             {"weights", weights},
             {"intercept", e.intercept},
             {"noise_std", e.noise_std},
             {"achievable_r", e.achievable_r},
             {"planting_threshold", e.planting_threshold},
             {"seed", e.seed}};
    return doc.dump(2) + "\n";
}

SynthFiles write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    SynthFiles files{dir / "images.jsonl",       dir / "health.csv",        dir / "demographics.csv",
                     dir / "counties.csv",       dir / "county_names.csv", dir / "expected_signal.json"};
    write_images(files.images, data.images);
    write_health_csv(files.health, data.health);
    write_demographics_csv(files.demographics, data.demographics);

    std::vector<CountyRect> rects;
    for (const auto& c : data.counties) rects.push_back(c.rect);
    write_rectangle_fixture(files.geo_fixture, rects);

    std::ofstream names(files.county_names, std::ios::binary);
    if (!names) throw DataError("cannot write " + files.county_names.string());
    names << "fips,name\n";
    for (const auto& c : data.counties) names << c.fips.str() << ',' << c.name << '\n';

    std::ofstream expected(files.expected, std::ios::binary);
    if (!expected) throw DataError("cannot write " + files.expected.string());
    expected << expected_signal_json(data.expected);
    return files;
}

}  // namespace healthtags
