#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "healthtags/features.hpp"
#include "healthtags/ingest.hpp"
#include "healthtags/model.hpp"

namespace healthtags {

/// Sample Pearson correlation. Throws DataError when the lengths differ, fewer
/// than two points are given, or either vector is constant.
double pearson_r(std::span<const double> a, std::span<const double> b);

/// Symmetric MAPE in percent: (100/n) Σ |F−A| / ((|A|+|F|)/2), with 0/0 terms
/// counted as 0. Range [0, 200].
double smape(std::span<const double> actual, std::span<const double> predicted);

/// atanh(r). Throws DataError for |r| >= 1.
double fisher_z(double r);

/// Two-sided p-value of a standard normal statistic.
double normal_two_sided_p(double z);

enum class PairedTest {
    dependent,    // Steiger (1980) test for correlations sharing one variable
    independent,  // (z1 − z2) / sqrt(2 / (n − 3))
};

std::string_view paired_test_name(PairedTest t) noexcept;
std::optional<PairedTest> parse_paired_test(std::string_view name) noexcept;

enum class Stars { none, p05, p01, p001 };

/// "" / "*" / "**" / "***" for p below .05 / .01 / .001.
Stars stars_for(double p) noexcept;
std::string_view stars_text(Stars s) noexcept;

struct CorrelationComparison {
    double r1 = 0.0;
    double r2 = 0.0;
    double r12 = 0.0;  // correlation between the two prediction vectors
    std::size_t n = 0;
    PairedTest method = PairedTest::dependent;
    double z = 0.0;
    double p = 1.0;
    Stars stars = Stars::none;
};

/// Tests whether r1 differs from r2, where r1 = corr(actual, pred1) and
/// r2 = corr(actual, pred2) come from the same n rows. Throws DataError for
/// n < 4, |r12| > 1, or |r1|, |r2| >= 1.
CorrelationComparison compare_correlations(double r1, double r2, double r12, std::size_t n,
                                           PairedTest method = PairedTest::dependent);

struct EvalResult {
    HealthStat stat = HealthStat::smokers;
    FeatureSet set = FeatureSet::of({Block::D});
    double pearson_r = 0.0;
    double smape_percent = 0.0;
    std::size_t n = 0;
};

EvalResult evaluate_predictions(HealthStat stat, FeatureSet set, std::span<const double> actual,
                                std::span<const double> predicted);

/// 95% interval tanh(atanh(r) ± 1.96/sqrt(n−3)). Degenerate inputs (|r| = 1 or
/// n <= 3) return [r, r] and [-1, 1] respectively.
std::pair<double, double> correlation_ci95(double r, std::size_t n);

struct FeatureCorrelation {
    std::string feature;
    Block block = Block::U;
    double r = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct FeatureRanking {
    std::vector<FeatureCorrelation> top;  // by |r| descending, ties by column order
    std::size_t skipped_constant = 0;
};

/// Correlates every column with y and keeps the k with the largest |r|.
/// Constant columns are skipped and counted.
FeatureRanking feature_correlations(const Eigen::MatrixXd& values, std::span<const ColumnInfo> columns,
                                    std::span<const double> y, std::size_t k = 10);
FeatureRanking feature_correlations(const DesignMatrix& design, std::span<const double> y,
                                    std::size_t k = 10);

// ---------------------------------------------------------------------------
// Confidence-threshold sweep
// ---------------------------------------------------------------------------

struct SweepInputs {
    std::vector<ImageRecord> machine_records;  // raw confidences, within `counties`
    std::vector<FipsCode> counties;
    const HealthStatTable* health = nullptr;
    std::vector<HealthStat> stats;
    std::size_t min_county_support = 10;
    RidgeSpec ridge;
    FoldAssignment folds;
};

struct SweepRow {
    double threshold = 0.0;
    std::size_t n_tags = 0;
    std::vector<double> r_per_stat;  // aligned with SweepInputs::stats
    double macro_r = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // in threshold order as given
    double chosen = 0.0;         // first threshold attaining the maximum macro r
};

/// For each threshold: confidence-filter, build the I vocabulary and
/// normalized count matrix, cross-validate every statistic and average the
/// pooled r values. Any failure aborts with the threshold and statistic named.
SweepResult sweep_confidence_threshold(const SweepInputs& inputs, std::span<const double> thresholds);

}  // namespace healthtags
