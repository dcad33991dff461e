#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "healthtags/eval.hpp"
#include "healthtags/features.hpp"
#include "healthtags/ingest.hpp"

namespace healthtags {

/// One (statistic, feature set) cell of the results grid.
struct GridEntry {
    HealthStat stat = HealthStat::smokers;
    FeatureSet set = FeatureSet::of({Block::D});
    double pearson_r = 0.0;
    double smape = 0.0;
    std::optional<double> p_vs_baseline;  // absent for the baseline itself
    Stars stars = Stars::none;
};

GridEntry make_grid_entry(const EvalResult& result,
                          const std::optional<CorrelationComparison>& vs_baseline);

struct RenderedCell {
    std::string text;  // value with 2 decimals, stars appended
    bool present = false;
    bool best = false;
    Stars stars = Stars::none;
};

struct RenderedRow {
    HealthStat stat;
    std::vector<RenderedCell> r_cells;      // aligned with RenderedGrid::sets
    std::vector<RenderedCell> smape_cells;
};

struct RenderedGrid {
    std::vector<FeatureSet> sets;
    std::vector<RenderedRow> rows;
    std::vector<std::string> warnings;  // one per missing cell

    std::string markdown() const;
};

/// Lays the entries out in canonical statistic order and U, I, D, U+D, I+D,
/// U+I+D column order (restricted to `sets`). The highest r and lowest SMAPE
/// per row are flagged best; ties go to the earlier column.
RenderedGrid render_grid(std::span<const GridEntry> entries, std::span<const HealthStat> stats,
                         std::span<const FeatureSet> sets);

struct GridFiles {
    std::filesystem::path csv;
    std::filesystem::path markdown;
    std::vector<std::string> warnings;
};

/// Writes `<stem>.csv` (statistic, feature_set, pearson_r, smape,
/// p_vs_baseline, stars; 4 decimals) and `<stem>.md` (2 decimals, best
/// values in bold). Missing cells are written blank and reported.
GridFiles emit_results_grid(std::span<const GridEntry> entries, std::span<const HealthStat> stats,
                            std::span<const FeatureSet> sets, const std::filesystem::path& stem);

std::vector<GridEntry> read_results_csv(const std::filesystem::path& path);

struct ScatterDatum {
    FipsCode fips;
    std::string name;
    double actual = 0.0;
    double predicted = 0.0;
    double residual = 0.0;  // predicted − actual
    bool outlier = false;
};

/// Builds scatter data and flags the `label_top` counties with the largest
/// |residual| (ties by FIPS). Predictions are never clamped.
std::vector<ScatterDatum> scatter_data(std::span<const FipsCode> counties, std::span<const double> actual,
                                       std::span<const double> predicted,
                                       const std::map<FipsCode, std::string>& names, std::size_t label_top = 3);

/// CSV fips,name,actual,predicted,residual,outlier; optionally a standalone
/// SVG with a y = x reference line and labelled outliers.
void emit_scatter(std::span<const ScatterDatum> data, const std::filesystem::path& csv,
                  const std::optional<std::filesystem::path>& svg = std::nullopt,
                  const std::string& title = "");

struct FeatureChartDatum {
    std::string feature;  // demographic features carry a "D: " prefix
    Block block = Block::U;
    double r = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

std::vector<FeatureChartDatum> feature_chart_data(std::span<const FeatureCorrelation> correlations);

/// CSV rank,feature,block,r,ci_low,ci_high preserving the input order.
void emit_feature_chart(std::span<const FeatureCorrelation> correlations, const std::filesystem::path& csv);

}  // namespace healthtags
