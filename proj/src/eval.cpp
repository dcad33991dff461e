#include "healthtags/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "healthtags/error.hpp"
#include "healthtags/tagging.hpp"

namespace healthtags {

namespace {

// Centered sum of squares, or nullopt when the vector is constant up to
// rounding relative to its largest magnitude.
std::optional<double> centered(std::span<const double> v, std::vector<double>& out) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double scale = 0.0;
    double ss = 0.0;
    out.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = v[i] - mean;
        ss += out[i] * out[i];
        scale = std::max(scale, std::abs(v[i]));
    }
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    if (sd <= 1e-12 * scale || ss == 0.0) return std::nullopt;
    return ss;
}

}  // namespace

double pearson_r(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("pearson_r: vectors differ in length");
    if (a.size() < 2) throw DataError("pearson_r: need at least 2 points");
    std::vector<double> ca, cb;
    auto saa = centered(a, ca);
    auto sbb = centered(b, cb);
    if (!saa || !sbb) throw DataError("undefined correlation: constant vector");
    double sab = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i) sab += ca[i] * cb[i];
    return std::clamp(sab / std::sqrt(*saa * *sbb), -1.0, 1.0);
}

double smape(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size()) throw DataError("smape: vectors differ in length");
    if (actual.empty()) throw DataError("smape: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double denom = (std::abs(actual[i]) + std::abs(predicted[i])) / 2.0;
        if (denom == 0.0) continue;
        total += std::abs(predicted[i] - actual[i]) / denom;
    }
    return 100.0 * total / static_cast<double>(actual.size());
}

double fisher_z(double r) {
    if (!(std::abs(r) < 1.0)) throw DataError("Fisher z is undefined for |r| >= 1");
    return std::atanh(r);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

std::string_view paired_test_name(PairedTest t) noexcept {
    return t == PairedTest::dependent ? "dependent" : "independent";
}

std::optional<PairedTest> parse_paired_test(std::string_view name) noexcept {
    if (name == "dependent") return PairedTest::dependent;
    if (name == "independent") return PairedTest::independent;
    return std::nullopt;
}

Stars stars_for(double p) noexcept {
    if (p < 0.001) return Stars::p001;
    if (p < 0.01) return Stars::p01;
    if (p < 0.05) return Stars::p05;
    return Stars::none;
}

std::string_view stars_text(Stars s) noexcept {
    switch (s) {
        case Stars::none: return "";
        case Stars::p05: return "*";
        case Stars::p01: return "**";
        case Stars::p001: return "***";
    }
    return "";
}

CorrelationComparison compare_correlations(double r1, double r2, double r12, std::size_t n,
                                           PairedTest method) {
    if (n < 4) throw DataError("comparing correlations needs n >= 4");
    if (!(std::abs(r12) <= 1.0)) throw DataError("invalid r12: |r12| > 1");
    const double z1 = fisher_z(r1);
    const double z2 = fisher_z(r2);

    CorrelationComparison c{r1, r2, r12, n, method, 0.0, 1.0, Stars::none};
    if (r1 == r2) return c;

    const double dof = static_cast<double>(n) - 3.0;
    if (method == PairedTest::independent) {
        c.z = (z1 - z2) / std::sqrt(2.0 / dof);
    } else {
        // Steiger's pooled-r statistic: the covariance of z1 and z2 induced by
        // the shared actual-values variable, evaluated at the mean correlation.
        const double rbar = (r1 + r2) / 2.0;
        const double rbar2 = rbar * rbar;
        const double psi = r12 * (1.0 - 2.0 * rbar2) - 0.5 * rbar2 * (1.0 - 2.0 * rbar2 - r12 * r12);
        const double cov = psi / ((1.0 - rbar2) * (1.0 - rbar2));
        const double var = 2.0 - 2.0 * cov;
        if (!(var > 0.0)) throw DataError("dependent correlation test is degenerate (r12 too close to 1)");
        c.z = (z1 - z2) * std::sqrt(dof) / std::sqrt(var);
    }
    c.p = normal_two_sided_p(c.z);
    c.stars = stars_for(c.p);
    return c;
}

EvalResult evaluate_predictions(HealthStat stat, FeatureSet set, std::span<const double> actual,
                                std::span<const double> predicted) {
    return {stat, set, pearson_r(actual, predicted), smape(actual, predicted), actual.size()};
}

std::pair<double, double> correlation_ci95(double r, std::size_t n) {
    if (std::abs(r) >= 1.0) return {r, r};
    if (n <= 3) return {-1.0, 1.0};
    const double half = 1.96 / std::sqrt(static_cast<double>(n) - 3.0);
    const double z = fisher_z(r);
    return {std::tanh(z - half), std::tanh(z + half)};
}

FeatureRanking feature_correlations(const Eigen::MatrixXd& values, std::span<const ColumnInfo> columns,
                                    std::span<const double> y, std::size_t k) {
    if (static_cast<std::size_t>(values.cols()) != columns.size())
        throw DataError("feature_correlations: column metadata does not match matrix width");
    if (static_cast<std::size_t>(values.rows()) != y.size())
        throw DataError("feature_correlations: target length does not match matrix rows");

    struct Scored {
        std::size_t column;
        double r;
    };
    std::vector<Scored> scored;
    FeatureRanking ranking;
    std::vector<double> col(y.size());
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
        for (Eigen::Index i = 0; i < values.rows(); ++i) col[static_cast<std::size_t>(i)] = values(i, j);
        std::vector<double> scratch;
        if (!centered(col, scratch)) {
            ++ranking.skipped_constant;
            continue;
        }
        scored.push_back({static_cast<std::size_t>(j), pearson_r(col, y)});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) { return std::abs(a.r) > std::abs(b.r); });
    scored.resize(std::min(k, scored.size()));
    for (const auto& s : scored) {
        auto [lo, hi] = correlation_ci95(s.r, y.size());
        ranking.top.push_back({columns[s.column].name, columns[s.column].block, s.r, lo, hi});
    }
    return ranking;
}

FeatureRanking feature_correlations(const DesignMatrix& design, std::span<const double> y,
                                    std::size_t k) {
    return feature_correlations(design.values, design.columns, y, k);
}

// ---------------------------------------------------------------------------

SweepResult sweep_confidence_threshold(const SweepInputs& in, std::span<const double> thresholds) {
    if (!in.health) throw ConfigError("threshold sweep needs a health table");
    if (thresholds.empty()) throw ConfigError("threshold sweep needs at least one threshold");
    if (in.stats.empty()) throw ConfigError("threshold sweep needs at least one statistic");

    std::vector<Eigen::VectorXd> targets;
    for (auto stat : in.stats) {
        auto col = in.health->column(in.counties, stat);
        targets.emplace_back(Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size())));
    }

    SweepResult result;
    double best = -std::numeric_limits<double>::infinity();
    for (double t : thresholds) {
        const auto context = "threshold " + std::to_string(t);
        SweepRow row;
        row.threshold = t;
        CountyTagMatrix matrix;
        try {
            const auto filtered = filter_records_by_confidence(in.machine_records, ConfidenceThreshold(t));
            const auto vocab = build_vocabulary(filtered, TagSource::machine, in.min_county_support);
            matrix = normalize_rows_l2(build_count_matrix(filtered, vocab, in.counties, TagSource::machine));
        } catch (const DataError& e) {
            throw DataError(context + ": " + e.what());
        }
        row.n_tags = matrix.vocabulary.size();
        for (std::size_t s = 0; s < in.stats.size(); ++s) {
            try {
                const auto cv = cross_validate(matrix.values, targets[s], in.ridge, in.folds);
                row.r_per_stat.push_back(pearson_r(
                    std::span<const double>(targets[s].data(), static_cast<std::size_t>(targets[s].size())),
                    std::span<const double>(cv.pooled.data(), static_cast<std::size_t>(cv.pooled.size()))));
            } catch (const DataError& e) {
                throw DataError(context + ", " + std::string(stat_name(in.stats[s])) + ": " + e.what());
            }
        }
        row.macro_r = std::accumulate(row.r_per_stat.begin(), row.r_per_stat.end(), 0.0) /
                      static_cast<double>(row.r_per_stat.size());
        if (row.macro_r > best) {
            best = row.macro_r;
            result.chosen = t;
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

}  // namespace healthtags
