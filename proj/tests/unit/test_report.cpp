#include <doctest.h>

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "healthtags/csv.hpp"
#include "healthtags/error.hpp"
#include "healthtags/report.hpp"
#include "support.hpp"

using namespace healthtags;
using testsupport::Gen;
using testsupport::read_text;
using testsupport::TempDir;

namespace {

FipsCode county(int n) { return FipsCode::parse(fmt::format("{:05d}", n)); }

std::vector<GridEntry> full_grid(Gen& g) {
    std::vector<GridEntry> entries;
    for (auto stat : kAllHealthStats) {
        for (const auto& set : FeatureSet::table_order()) {
            GridEntry e{stat, set, g.uniform(-1, 1), g.uniform(0, 30), std::nullopt, Stars::none};
            if (!(set == FeatureSet::of({Block::D}))) {
                e.p_vs_baseline = g.uniform(0, 0.1);
                e.stars = stars_for(*e.p_vs_baseline);
            }
            entries.push_back(e);
        }
    }
    return entries;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

const std::vector<HealthStat> kStats(kAllHealthStats.begin(), kAllHealthStats.end());
const std::vector<FeatureSet> kSets(FeatureSet::table_order().begin(), FeatureSet::table_order().end());

}  // namespace

TEST_SUITE("report") {

TEST_CASE("full grid has 54 data rows and reads back") {
    Gen g(71);
    TempDir dir;
    auto entries = full_grid(g);
    std::shuffle(entries.begin(), entries.end(), g.engine());
    auto files = emit_results_grid(entries, kStats, kSets, dir / "results");
    CHECK(files.warnings.empty());
    const auto csv = read_text(files.csv);
    CHECK(count_lines(csv) == 55);
    CHECK(csv.rfind("statistic,feature_set,pearson_r,smape,p_vs_baseline,stars\nsmokers,U,", 0) == 0);

    auto back = read_results_csv(files.csv);
    REQUIRE(back.size() == 54);
    for (const auto& e : back) {
        auto it = std::find_if(entries.begin(), entries.end(),
                               [&](const GridEntry& x) { return x.stat == e.stat && x.set == e.set; });
        REQUIRE(it != entries.end());
        CHECK(std::abs(e.pearson_r - it->pearson_r) <= 0.5e-4);
        CHECK(std::abs(e.smape - it->smape) <= 0.5e-4);
        CHECK(e.p_vs_baseline.has_value() == it->p_vs_baseline.has_value());
    }
}

TEST_CASE("minimal grid") {
    TempDir dir;
    const std::vector<GridEntry> one{{HealthStat::obese, FeatureSet::parse("I"), 0.97, 3.25, std::nullopt, Stars::none}};
    const std::vector<HealthStat> stats{HealthStat::obese};
    const std::vector<FeatureSet> sets{FeatureSet::parse("I")};
    auto files = emit_results_grid(one, stats, sets, dir / "g");
    CHECK(read_text(files.csv) == "statistic,feature_set,pearson_r,smape,p_vs_baseline,stars\nobese,I,0.9700,3.2500,,\n");
    CHECK(read_text(files.markdown) ==
          "| Statistic | r I | SMAPE I |\n|---|---|---|\n| Obese | **0.97** | **3.25** |\n\n"
          "Significance of improvement over the D baseline: * p < .05, ** p < .01, *** p < .001.\n");
}

TEST_CASE("missing cells are blank and reported") {
    TempDir dir;
    const std::vector<GridEntry> entries{{HealthStat::obese, FeatureSet::parse("U"), 0.5, 3, 0.2, Stars::none}};
    const std::vector<HealthStat> stats{HealthStat::obese};
    const std::vector<FeatureSet> sets{FeatureSet::parse("U"), FeatureSet::parse("D")};
    auto files = emit_results_grid(entries, stats, sets, dir / "g");
    REQUIRE(files.warnings.size() == 1);
    CHECK(files.warnings[0] == "missing result for obese / D");
    CHECK(read_text(files.csv).find("obese,D,,,,\n") != std::string::npos);
    CHECK(read_results_csv(files.csv).size() == 1);
}

TEST_CASE("best flags and star rendering") {
    const std::vector<GridEntry> entries{
        {HealthStat::smokers, FeatureSet::parse("U"), 0.84, 3.7, 0.01, Stars::p05},
        {HealthStat::smokers, FeatureSet::parse("D"), 0.81, 4.0, std::nullopt, Stars::none},
        {HealthStat::smokers, FeatureSet::parse("U+D"), 0.84, 3.7, 0.0005, Stars::p001},
    };
    const std::vector<HealthStat> stats{HealthStat::smokers};
    auto grid = render_grid(entries, stats, kSets);
    REQUIRE(grid.rows.size() == 1);
    const auto& row = grid.rows[0];
    CHECK(row.r_cells[0].best);
    CHECK_FALSE(row.r_cells[3].best);
    CHECK(row.smape_cells[0].best);
    CHECK(row.r_cells[0].text == "0.84*");
    CHECK(row.r_cells[3].text == "0.84***");
    CHECK(row.r_cells[2].text == "0.81");
    CHECK_FALSE(row.r_cells[1].present);
    CHECK(grid.warnings.size() == 3);
}

TEST_CASE("re-emission is byte-identical") {
    Gen g(72);
    TempDir dir;
    auto entries = full_grid(g);
    emit_results_grid(entries, kStats, kSets, dir / "a");
    std::reverse(entries.begin(), entries.end());
    emit_results_grid(entries, kStats, kSets, dir / "b");
    CHECK(read_text(dir / "a.csv") == read_text(dir / "b.csv"));
    CHECK(read_text(dir / "a.md") == read_text(dir / "b.md"));
}

TEST_CASE("stored table renders to the reference markdown") {
    const std::filesystem::path fixtures = HEALTHTAGS_FIXTURES;
    auto entries = read_results_csv(fixtures / "table1.csv");
    REQUIRE(entries.size() == 54);
    auto grid = render_grid(entries, kStats, kSets);
    CHECK(grid.warnings.empty());
    CHECK(grid.markdown() == read_text(fixtures / "table1_expected.md"));
}

TEST_CASE("results csv validation") {
    TempDir dir;
    testsupport::write_text(dir / "bad.csv", "stat,set\n");
    CHECK_THROWS_AS(read_results_csv(dir / "bad.csv"), DataError);
    testsupport::write_text(dir / "p.csv", "statistic,feature_set,pearson_r,smape,p_vs_baseline,stars\nobese,U,0.5,1,1.5,\n");
    CHECK_THROWS_WITH_AS(read_results_csv(dir / "p.csv"), doctest::Contains("p_vs_baseline"), DataError);
}

TEST_CASE("scatter: perfect predictions") {
    std::vector<FipsCode> cs{county(5), county(2), county(9), county(1), county(7)};
    const std::vector<double> y{1, 2, 3, 4, 5};
    auto data = scatter_data(cs, y, y, {}, 3);
    std::set<FipsCode> flagged;
    for (const auto& d : data) {
        CHECK(d.residual == 0.0);
        if (d.outlier) flagged.insert(d.fips);
    }
    CHECK(flagged == std::set<FipsCode>{county(1), county(2), county(5)});
}

TEST_CASE("scatter: exactly label_top flagged, every county once") {
    Gen g(73);
    std::vector<FipsCode> cs;
    std::vector<double> actual, predicted;
    for (int c = 0; c < 100; ++c) {
        cs.push_back(county(1000 + c));
        actual.push_back(g.uniform(0, 30));
        predicted.push_back(actual.back() + g.normal());
    }
    predicted[17] = actual[17] + 50;
    auto data = scatter_data(cs, actual, predicted, {}, 3);
    CHECK(std::count_if(data.begin(), data.end(), [](const auto& d) { return d.outlier; }) == 3);
    CHECK(data[17].outlier);
    std::set<FipsCode> seen;
    for (const auto& d : data) {
        CHECK(seen.insert(d.fips).second);
        CHECK(d.residual == d.predicted - d.actual);
    }
    CHECK(seen.size() == 100);
}

TEST_CASE("scatter: negative predictions are preserved") {
    TempDir dir;
    const std::vector<FipsCode> cs{county(36061), county(1001)};
    const std::vector<double> actual{0.0, 5.0}, predicted{-1.9, 5.0};
    const std::map<FipsCode, std::string> names{{county(36061), "New York, NY"}};
    auto data = scatter_data(cs, actual, predicted, names, 1);
    CHECK(data[0].residual == doctest::Approx(-1.9));
    CHECK(data[0].outlier);
    emit_scatter(data, dir / "s.csv", dir / "s.svg", "Limited access");
    const auto csv = read_text(dir / "s.csv");
    CHECK(csv ==
          "fips,name,actual,predicted,residual,outlier\n"
          "36061,\"New York, NY\",0.0000,-1.9000,-1.9000,1\n"
          "01001,,5.0000,5.0000,0.0000,0\n");
    const auto svg = read_text(dir / "s.svg");
    CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
    CHECK(svg.find("stroke-dasharray") != std::string::npos);
    CHECK(svg.find("New York, NY") != std::string::npos);
    CHECK(svg.find("href") == std::string::npos);
}

TEST_CASE("feature chart") {
    TempDir dir;
    std::vector<FeatureCorrelation> in;
    for (int i = 0; i < 10; ++i)
        in.push_back({fmt::format("tag{}", i), i == 4 ? Block::D : Block::I, 0.9 - 0.05 * i, 0.8 - 0.05 * i, 0.95 - 0.05 * i});
    in[4].feature = "median_income";
    auto chart = feature_chart_data(in);
    REQUIRE(chart.size() == 10);
    CHECK(chart[4].feature == "D: median_income");
    CHECK(chart[3].feature == "tag3");
    emit_feature_chart(in, dir / "f.csv");
    const auto csv = read_text(dir / "f.csv");
    CHECK(count_lines(csv) == 11);
    CHECK(csv.find("5,D: median_income,D,0.7000,0.6000,0.7500\n") != std::string::npos);

    emit_feature_chart({}, dir / "empty.csv");
    CHECK(read_text(dir / "empty.csv") == "rank,feature,block,r,ci_low,ci_high\n");
}

TEST_CASE("grid entries from evaluation results") {
    EvalResult r{HealthStat::diabetic, FeatureSet::parse("U+D"), 0.83, 4.5, 100};
    auto cmp = compare_correlations(0.83, 0.77, 0.9, 100);
    auto e = make_grid_entry(r, cmp);
    CHECK(e.p_vs_baseline == cmp.p);
    CHECK(e.stars == cmp.stars);
    CHECK_FALSE(make_grid_entry(r, std::nullopt).p_vs_baseline);
}

TEST_CASE("csv helpers") {
    CHECK(split_csv_line("a,\"b,c\",\"d\"\"e\",") == std::vector<std::string>{"a", "b,c", "d\"e", ""});
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(parse_double("1e-3") == 1e-3);
    CHECK_FALSE(parse_double("1.5x"));
    CHECK_FALSE(parse_double(""));
}

}  // TEST_SUITE
