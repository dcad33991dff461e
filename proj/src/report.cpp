#include "healthtags/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "healthtags/csv.hpp"
#include "healthtags/error.hpp"

namespace healthtags {

GridEntry make_grid_entry(const EvalResult& result,
                          const std::optional<CorrelationComparison>& vs_baseline) {
    GridEntry e{result.stat, result.set, result.pearson_r, result.smape_percent, std::nullopt, Stars::none};
    if (vs_baseline) {
        e.p_vs_baseline = vs_baseline->p;
        e.stars = vs_baseline->stars;
    }
    return e;
}

namespace {

const GridEntry* find_entry(std::span<const GridEntry> entries, HealthStat stat, FeatureSet set) {
    for (const auto& e : entries)
        if (e.stat == stat && e.set == set) return &e;
    return nullptr;
}

std::vector<FeatureSet> ordered_sets(std::span<const FeatureSet> sets) {
    std::vector<FeatureSet> out;
    for (auto s : FeatureSet::table_order())
        if (std::find(sets.begin(), sets.end(), s) != sets.end()) out.push_back(s);
    return out;
}

std::vector<HealthStat> ordered_stats(std::span<const HealthStat> stats) {
    std::vector<HealthStat> out;
    for (auto s : kAllHealthStats)
        if (std::find(stats.begin(), stats.end(), s) != stats.end()) out.push_back(s);
    return out;
}

}  // namespace

RenderedGrid render_grid(std::span<const GridEntry> entries, std::span<const HealthStat> stats,
                         std::span<const FeatureSet> sets) {
    RenderedGrid grid;
    grid.sets = ordered_sets(sets);
    for (auto stat : ordered_stats(stats)) {
        RenderedRow row{stat, {}, {}};
        std::optional<std::size_t> best_r, best_smape;
        for (std::size_t j = 0; j < grid.sets.size(); ++j) {
            const auto* e = find_entry(entries, stat, grid.sets[j]);
            RenderedCell r_cell, s_cell;
            if (!e) {
                grid.warnings.push_back("missing result for " + std::string(stat_name(stat)) + " / " +
                                        grid.sets[j].name());
            } else {
                r_cell = {fmt::format("{:.2f}{}", e->pearson_r, stars_text(e->stars)), true, false, e->stars};
                s_cell = {fmt::format("{:.2f}", e->smape), true, false, Stars::none};
                const auto* br = best_r ? find_entry(entries, stat, grid.sets[*best_r]) : nullptr;
                if (!br || e->pearson_r > br->pearson_r) best_r = j;
                const auto* bs = best_smape ? find_entry(entries, stat, grid.sets[*best_smape]) : nullptr;
                if (!bs || e->smape < bs->smape) best_smape = j;
            }
            row.r_cells.push_back(std::move(r_cell));
            row.smape_cells.push_back(std::move(s_cell));
        }
        if (best_r) row.r_cells[*best_r].best = true;
        if (best_smape) row.smape_cells[*best_smape].best = true;
        grid.rows.push_back(std::move(row));
    }
    return grid;
}

std::string RenderedGrid::markdown() const {
    auto md_cell = [](const RenderedCell& c) -> std::string {
        if (!c.present) return "";
        std::string text;
        for (char ch : c.text) {
            if (ch == '*') text += '\\';
            text += ch;
        }
        return c.best ? "**" + text + "**" : text;
    };
    std::string out = "| Statistic |";
    for (const auto& s : sets) out += " r " + s.name() + " |";
    for (const auto& s : sets) out += " SMAPE " + s.name() + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < 2 * sets.size(); ++i) out += "---|";
    out += '\n';
    for (const auto& row : rows) {
        out += "| " + std::string(stat_display_name(row.stat)) + " |";
        for (const auto& c : row.r_cells) out += " " + md_cell(c) + " |";
        for (const auto& c : row.smape_cells) out += " " + md_cell(c) + " |";
        out += '\n';
    }
    out += "\nSignificance of improvement over the D baseline: * p < .05, ** p < .01, *** p < .001.\n";
    return out;
}

GridFiles emit_results_grid(std::span<const GridEntry> entries, std::span<const HealthStat> stats,
                            std::span<const FeatureSet> sets, const std::filesystem::path& stem) {
    GridFiles files;
    files.csv = stem;
    files.csv += ".csv";
    files.markdown = stem;
    files.markdown += ".md";

    const auto grid = render_grid(entries, stats, sets);
    files.warnings = grid.warnings;

    std::ofstream csv(files.csv, std::ios::binary);
    if (!csv) throw DataError("cannot write " + files.csv.string());
    csv << "statistic,feature_set,pearson_r,smape,p_vs_baseline,stars\n";
    for (const auto& row : grid.rows) {
        for (const auto& set : grid.sets) {
            const auto* e = find_entry(entries, row.stat, set);
            csv << stat_name(row.stat) << ',' << set.name() << ',';
            if (e) {
                csv << fmt::format("{:.4f},{:.4f},", e->pearson_r, e->smape);
                if (e->p_vs_baseline) csv << fmt::format("{:.4e}", *e->p_vs_baseline);
                csv << ',' << stars_text(e->stars);
            } else {
                csv << ",,,";
            }
            csv << '\n';
        }
    }

    std::ofstream md(files.markdown, std::ios::binary);
    if (!md) throw DataError("cannot write " + files.markdown.string());
    md << grid.markdown();
    return files;
}

std::vector<GridEntry> read_results_csv(const std::filesystem::path& path) {
    CsvReader reader(path);
    const std::vector<std::string> header{"statistic", "feature_set", "pearson_r", "smape", "p_vs_baseline", "stars"};
    auto first = reader.next();
    if (!first || *first != header)
        throw DataError(path.string() + ": expected header statistic,feature_set,pearson_r,smape,p_vs_baseline,stars");
    std::vector<GridEntry> entries;
    while (auto row = reader.next()) {
        const auto where = path.string() + ":" + std::to_string(reader.line_number());
        if (row->size() != 6) throw DataError(where + ": expected 6 fields");
        auto stat = parse_stat((*row)[0]);
        if (!stat) throw DataError(where + ": unknown statistic '" + (*row)[0] + "'");
        const auto set = FeatureSet::parse((*row)[1]);
        if ((*row)[2].empty()) continue;  // blank cell
        auto r = parse_double((*row)[2]);
        auto s = parse_double((*row)[3]);
        if (!r || !s) throw DataError(where + ": non-numeric r or SMAPE");
        GridEntry e{*stat, set, *r, *s, std::nullopt, Stars::none};
        if (!(*row)[4].empty()) {
            auto p = parse_double((*row)[4]);
            if (!p || *p < 0.0 || *p > 1.0) throw DataError(where + ": invalid p_vs_baseline");
            e.p_vs_baseline = *p;
            e.stars = stars_for(*p);
        }
        entries.push_back(e);
    }
    return entries;
}

// ---------------------------------------------------------------------------

std::vector<ScatterDatum> scatter_data(std::span<const FipsCode> counties, std::span<const double> actual,
                                       std::span<const double> predicted,
                                       const std::map<FipsCode, std::string>& names, std::size_t label_top) {
    if (counties.size() != actual.size() || counties.size() != predicted.size())
        throw DataError("scatter inputs differ in length");
    std::vector<ScatterDatum> data;
    for (std::size_t i = 0; i < counties.size(); ++i) {
        auto name = names.find(counties[i]);
        data.push_back({counties[i], name == names.end() ? "" : name->second, actual[i], predicted[i],
                        predicted[i] - actual[i], false});
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ra = std::abs(data[a].residual), rb = std::abs(data[b].residual);
        if (ra != rb) return ra > rb;
        return data[a].fips < data[b].fips;
    });
    for (std::size_t i = 0; i < std::min(label_top, order.size()); ++i) data[order[i]].outlier = true;
    return data;
}

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void write_scatter_svg(std::span<const ScatterDatum> data, const std::filesystem::path& path,
                       const std::string& title) {
    constexpr double size = 480.0, margin = 50.0;
    double lo = 0.0, hi = 1.0;
    if (!data.empty()) {
        lo = hi = data.front().actual;
        for (const auto& d : data) {
            lo = std::min({lo, d.actual, d.predicted});
            hi = std::max({hi, d.actual, d.predicted});
        }
    }
    if (hi - lo < 1e-12) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto sx = [&](double v) { return margin + (v - lo) / (hi - lo) * (size - 2 * margin); };
    auto sy = [&](double v) { return size - margin - (v - lo) / (hi - lo) * (size - 2 * margin); };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" "
                       "viewBox=\"0 0 {0} {0}\" font-family=\"sans-serif\" font-size=\"11\">\n",
                       size);
    out << fmt::format("<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n", size);
    out << fmt::format("<rect x=\"{0}\" y=\"{0}\" width=\"{1}\" height=\"{1}\" fill=\"none\" stroke=\"black\"/>\n",
                       margin, size - 2 * margin);
    out << fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"gray\" "
                       "stroke-dasharray=\"4 3\"/>\n",
                       sx(lo), sy(lo), sx(hi), sy(hi));
    out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">actual</text>\n", size / 2,
                       size - 15);
    out << fmt::format("<text x=\"15\" y=\"{:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.2f})\">"
                       "predicted</text>\n",
                       size / 2, size / 2);
    out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.4g}</text>\n", margin,
                       size - margin + 14, lo);
    out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.4g}</text>\n", size - margin,
                       size - margin + 14, hi);
    if (!title.empty())
        out << fmt::format("<text x=\"{:.2f}\" y=\"30\" text-anchor=\"middle\">{}</text>\n", size / 2,
                           xml_escape(title));
    for (const auto& d : data) {
        out << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", sx(d.actual),
                           sy(d.predicted), d.outlier ? "firebrick" : "steelblue");
        if (d.outlier)
            out << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", sx(d.actual) + 5,
                               sy(d.predicted) - 5, xml_escape(d.name.empty() ? d.fips.str() : d.name));
    }
    out << "</svg>\n";
}

}  // namespace

void emit_scatter(std::span<const ScatterDatum> data, const std::filesystem::path& csv,
                  const std::optional<std::filesystem::path>& svg, const std::string& title) {
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw DataError("cannot write " + csv.string());
    out << "fips,name,actual,predicted,residual,outlier\n";
    for (const auto& d : data)
        out << fmt::format("{},{},{:.4f},{:.4f},{:.4f},{}\n", d.fips.str(), csv_escape(d.name), d.actual,
                           d.predicted, d.residual, d.outlier ? 1 : 0);
    if (svg) write_scatter_svg(data, *svg, title);
}

std::vector<FeatureChartDatum> feature_chart_data(std::span<const FeatureCorrelation> correlations) {
    std::vector<FeatureChartDatum> out;
    for (const auto& c : correlations)
        out.push_back({c.block == Block::D ? "D: " + c.feature : c.feature, c.block, c.r, c.ci_low, c.ci_high});
    return out;
}

void emit_feature_chart(std::span<const FeatureCorrelation> correlations, const std::filesystem::path& csv) {
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw DataError("cannot write " + csv.string());
    out << "rank,feature,block,r,ci_low,ci_high\n";
    std::size_t rank = 0;
    for (const auto& d : feature_chart_data(correlations))
        out << fmt::format("{},{},{},{:.4f},{:.4f},{:.4f}\n", ++rank, csv_escape(d.feature), block_name(d.block),
                           d.r, d.ci_low, d.ci_high);
}

}  // namespace healthtags
