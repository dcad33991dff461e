#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "healthtags/error.hpp"
#include "healthtags/eval.hpp"
#include "support.hpp"

using namespace healthtags;
using testsupport::Gen;

namespace {

using Vec = std::vector<double>;

double r_of(const Vec& a, const Vec& b) { return pearson_r(a, b); }

FipsCode county(int n) { return FipsCode::parse(fmt::format("{:05d}", n)); }

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("pearson examples") {
    CHECK(r_of({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r_of({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
    // scipy.stats.pearsonr([1,2,3],[1,2,4]).statistic
    CHECK(std::abs(r_of({1, 2, 3}, {1, 2, 4}) - 0.9819805060619655) < 1e-12);
    CHECK_THROWS_WITH_AS(r_of({1, 2, 3}, {5, 5, 5}), doctest::Contains("constant"), DataError);
    CHECK_THROWS_AS(r_of({1}, {1}), DataError);
    CHECK_THROWS_AS(r_of({1, 2}, {1, 2, 3}), DataError);
}

TEST_CASE("pearson is affine invariant") {
    Gen g(61);
    for (int trial = 0; trial < 500; ++trial) {
        const auto n = g.index(3, 50);
        Vec a = g.values(n, -10, 10), b = g.values(n, -10, 10);
        const double base = r_of(a, b);
        const double c = std::pow(10.0, g.uniform(-3, 3)), d = g.uniform(-100, 100);
        Vec pos(n), neg(n);
        for (std::size_t i = 0; i < n; ++i) {
            pos[i] = c * b[i] + d;
            neg[i] = -c * b[i] + d;
        }
        CHECK(std::abs(r_of(a, pos) - base) < 1e-12);
        CHECK(std::abs(r_of(a, neg) + base) < 1e-12);
        CHECK(std::abs(r_of(pos, a) - base) < 1e-12);
    }
}

TEST_CASE("smape examples") {
    CHECK(smape(Vec{10}, Vec{8}) == doctest::Approx(200.0 / 9.0).epsilon(1e-14));
    CHECK(std::abs(smape(Vec{10}, Vec{8}) - 22.2222) < 1e-4);
    CHECK(smape(Vec{3, -2, 7}, Vec{3, -2, 7}) == 0.0);
    CHECK(smape(Vec{0}, Vec{0}) == 0.0);
    CHECK(smape(Vec{0, 10}, Vec{0, 8}) == doctest::Approx(100.0 / 9.0));
    CHECK(smape(Vec{0}, Vec{-1.9}) == 200.0);
    CHECK_THROWS_AS(smape(Vec{}, Vec{}), DataError);
}

TEST_CASE("smape is symmetric and bounded") {
    Gen g(62);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = g.index(1, 20);
        Vec a = g.values(n, -50, 50), b = g.values(n, -50, 50);
        if (g.coin(0.2)) a[0] = b[0] = 0.0;
        const double s = smape(a, b);
        CHECK(s == doctest::Approx(smape(b, a)).epsilon(1e-14));
        CHECK(s >= 0.0);
        CHECK(s <= 200.0);
    }
}

TEST_CASE("fisher z") {
    CHECK(fisher_z(0.0) == 0.0);
    CHECK(std::abs(fisher_z(0.5) - 0.5493061443340548) < 1e-12);
    CHECK(fisher_z(-0.5) == -fisher_z(0.5));
    CHECK_THROWS_AS(fisher_z(1.0), DataError);
    CHECK_THROWS_AS(fisher_z(-1.5), DataError);
    for (double x = -3.99; x < 4.0; x += 0.01) CHECK(std::abs(fisher_z(std::tanh(x)) - x) < 1e-10);
}

TEST_CASE("identical correlations give z = 0 and p = 1") {
    for (auto method : {PairedTest::dependent, PairedTest::independent}) {
        for (double r12 : {-0.3, 0.0, 0.9}) {
            auto c = compare_correlations(0.6, 0.6, r12, 100, method);
            CHECK(c.z == 0.0);
            CHECK(c.p == 1.0);
            CHECK(c.stars == Stars::none);
        }
    }
}

TEST_CASE("independent test example") {
    auto c = compare_correlations(0.5, 0.0, 0.0, 103, PairedTest::independent);
    // scipy: 0.5493061443340548 / sqrt(2/100); 2 * norm.sf(z)
    CHECK(std::abs(c.z - 3.884180996060466) < 1e-9);
    CHECK(std::abs(c.p - 1.0267540182064662e-4) < 1e-12);
    CHECK(stars_text(c.stars) == "***");
}

TEST_CASE("dependent test example") {
    auto c = compare_correlations(0.84, 0.81, 0.9, 100, PairedTest::dependent);
    CHECK(std::abs(c.z - 1.2396027162613346) < 1e-9);
    CHECK(std::abs(c.p - 0.21512237549498003) < 1e-9);
    CHECK_THROWS_AS(compare_correlations(0.5, 0.4, 1.2, 100), DataError);
    CHECK_THROWS_AS(compare_correlations(0.5, 0.4, 0.1, 3), DataError);
    CHECK_THROWS_AS(compare_correlations(1.0, 0.4, 0.1, 30), DataError);
}

TEST_CASE("star thresholds") {
    CHECK(stars_text(stars_for(0.04)) == "*");
    CHECK(stars_text(stars_for(0.005)) == "**");
    CHECK(stars_text(stars_for(0.0005)) == "***");
    CHECK(stars_text(stars_for(0.2)) == "");
    CHECK(stars_for(0.05) == Stars::none);
    CHECK(stars_for(0.01) == Stars::p05);
    CHECK(stars_for(0.001) == Stars::p01);
    CHECK(stars_for(0.0) == Stars::p001);
}

TEST_CASE("swapping the correlations negates z and keeps p") {
    Gen g(63);
    for (int trial = 0; trial < 500; ++trial) {
        const double r1 = g.uniform(-0.95, 0.95), r2 = g.uniform(-0.95, 0.95), r12 = g.uniform(0.0, 0.9);
        const auto n = g.index(4, 500);
        // Only consistent correlation matrices of (actual, pred1, pred2).
        if (1 - r1 * r1 - r2 * r2 - r12 * r12 + 2 * r1 * r2 * r12 <= 0.01) continue;
        for (auto method : {PairedTest::dependent, PairedTest::independent}) {
            auto a = compare_correlations(r1, r2, r12, n, method);
            auto b = compare_correlations(r2, r1, r12, n, method);
            CHECK(a.z == doctest::Approx(-b.z).epsilon(1e-12));
            CHECK(a.p == doctest::Approx(b.p).epsilon(1e-12));
            CHECK(a.p >= 0.0);
            CHECK(a.p <= 1.0);
        }
    }
}

TEST_CASE("dependent test holds its size under the null") {
    // Two predictions of y with equal noise variance share the same population
    // correlation with y; the rejection rate at .05 should be close to 5%.
    Gen g(64);
    const int sims = 2000;
    const std::size_t n = 100;
    int rejections = 0;
    for (int s = 0; s < sims; ++s) {
        Vec y(n), p1(n), p2(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = g.normal();
            const double shared = g.normal();
            p1[i] = y[i] + 0.8 * shared + 0.6 * g.normal();
            p2[i] = y[i] + 0.8 * shared + 0.6 * g.normal();
        }
        auto c = compare_correlations(r_of(y, p1), r_of(y, p2), r_of(p1, p2), n);
        rejections += c.p < 0.05 ? 1 : 0;
    }
    const double rate = static_cast<double>(rejections) / sims;
    CHECK(rate > 0.03);
    CHECK(rate < 0.075);
}

TEST_CASE("confidence interval") {
    auto [lo, hi] = correlation_ci95(0.0, 103);
    CHECK(std::abs(hi - 0.19352813145089287) < 1e-12);
    CHECK(lo == -hi);
    CHECK(correlation_ci95(1.0, 50) == std::pair{1.0, 1.0});
    CHECK(correlation_ci95(0.3, 3) == std::pair{-1.0, 1.0});
    Gen g(65);
    for (int trial = 0; trial < 500; ++trial) {
        const double r = g.uniform(-0.999, 0.999);
        auto [l, h] = correlation_ci95(r, g.index(4, 1000));
        CHECK(l <= r);
        CHECK(r <= h);
    }
}

TEST_CASE("feature correlation examples") {
    const Vec y{1, 4, 2, 8, 5};
    Eigen::MatrixXd m(5, 3);
    m << 5, 1, 1, 5, 4, 0, 5, 2, 3, 5, 8, 1, 5, 5, 2;
    const std::vector<ColumnInfo> cols{{Block::U, "flat"}, {Block::I, "same"}, {Block::D, "median_income"}};
    auto ranking = feature_correlations(m, cols, y, 10);
    CHECK(ranking.skipped_constant == 1);
    REQUIRE(ranking.top.size() == 2);
    CHECK(ranking.top[0].feature == "same");
    CHECK(ranking.top[0].r == doctest::Approx(1.0));
    CHECK(ranking.top[1].block == Block::D);
    CHECK(feature_correlations(m, cols, y, 1).top.size() == 1);
}

TEST_CASE("top-k matches a brute-force sort") {
    Gen g(66);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<Eigen::Index>(g.index(5, 30));
        const auto p = static_cast<Eigen::Index>(g.index(1, 25));
        Eigen::MatrixXd m = g.matrix(n, p);
        std::vector<ColumnInfo> cols;
        for (Eigen::Index j = 0; j < p; ++j) cols.push_back({Block::U, fmt::format("c{}", j)});
        Vec y = g.values(static_cast<std::size_t>(n), -1, 1);
        const auto k = g.index(0, 30);
        auto ranking = feature_correlations(m, cols, y, k);

        std::vector<std::pair<double, Eigen::Index>> all;
        for (Eigen::Index j = 0; j < p; ++j) {
            Vec col(m.col(j).data(), m.col(j).data() + n);
            all.push_back({r_of(col, y), j});
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            if (std::abs(a.first) != std::abs(b.first)) return std::abs(a.first) > std::abs(b.first);
            return a.second < b.second;
        });
        REQUIRE(ranking.top.size() == std::min<std::size_t>(k, static_cast<std::size_t>(p)));
        for (std::size_t i = 0; i < ranking.top.size(); ++i) {
            CHECK(ranking.top[i].feature == cols[static_cast<std::size_t>(all[i].second)].name);
            CHECK(ranking.top[i].r == all[i].first);
            CHECK(ranking.top[i].ci_low <= ranking.top[i].r);
            CHECK(ranking.top[i].r <= ranking.top[i].ci_high);
        }
    }
}

TEST_CASE("threshold sweep") {
    // 12 counties; "good" tags carry the signal at high confidence, "junk" tags
    // are common, low-confidence and unrelated.
    Gen g(67);
    std::vector<FipsCode> counties;
    HealthStatTable health;
    std::vector<ImageRecord> records;
    for (int c = 0; c < 12; ++c) {
        counties.push_back(county(c + 1));
        const double level = g.uniform(0, 1);
        int n_good = 0;
        for (int i = 0; i < 40; ++i) {
            ImageRecord r;
            r.id = fmt::format("{}_{}", c, i);
            r.fips = counties.back();
            std::vector<MachineTag> tags;
            if (g.coin(0.1 + 0.8 * level)) {
                tags.push_back({"good", 90.0});
                ++n_good;
            } else {
                tags.push_back({"other", 90.0});
            }
            tags.push_back({fmt::format("junk{}", g.index(0, 3)), 12.0});
            r.machine_tags = tags;
            records.push_back(r);
        }
        health.insert(counties.back(), HealthStat::obese, n_good);
        health.insert(counties.back(), HealthStat::diabetic, 2.0 * n_good + g.normal());
    }
    SweepInputs in;
    in.machine_records = records;
    in.counties = counties;
    in.health = &health;
    in.stats = {HealthStat::obese, HealthStat::diabetic};
    in.min_county_support = 3;
    in.ridge = {0.1, true};
    in.folds = kfold_split(12, 4, 1);

    SUBCASE("single threshold") {
        const Vec t{20};
        auto res = sweep_confidence_threshold(in, t);
        REQUIRE(res.rows.size() == 1);
        CHECK(res.chosen == 20);
        CHECK(res.rows[0].n_tags == 2);
        CHECK(res.rows[0].r_per_stat.size() == 2);
    }
    SUBCASE("monotone tag counts and a separating choice") {
        const Vec t{5, 10, 15, 20, 30, 60};
        auto res = sweep_confidence_threshold(in, t);
        REQUIRE(res.rows.size() == t.size());
        for (std::size_t i = 1; i < res.rows.size(); ++i) CHECK(res.rows[i].n_tags <= res.rows[i - 1].n_tags);
        CHECK(res.rows[0].n_tags == 6);
        CHECK(res.chosen > 10);
        CHECK(res.chosen < 90);
    }
    SUBCASE("failures name the threshold") {
        const Vec t{95};
        CHECK_THROWS_WITH_AS(sweep_confidence_threshold(in, t), doctest::Contains("threshold 95"), DataError);
    }
}

}  // TEST_SUITE
