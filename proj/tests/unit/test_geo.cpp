#include <doctest.h>

#include <atomic>
#include <chrono>
#include <mutex>

#include <fmt/format.h>

#include "healthtags/error.hpp"
#include "healthtags/geo.hpp"
#include "local_server.hpp"
#include "support.hpp"

using namespace healthtags;
using namespace std::chrono_literals;
using testsupport::Gen;
using testsupport::LocalServer;
using testsupport::TempDir;

namespace {

FipsCode fips(const char* s) { return FipsCode::parse(s); }

RectangleFixture atlanta_fixture() {
    return RectangleFixture({{33.70, 33.80, -84.45, -84.35, fips("13121")},
                             {33.70, 33.80, -84.35, -84.25, fips("13089")}});
}

// Counts lookups so tests can see whether the backend was consulted.
class CountingBackend final : public CountyBackend {
public:
    explicit CountingBackend(CountyBackend& inner) : inner_(inner) {}
    std::optional<FipsCode> lookup(GeoPoint p) override {
        ++calls;
        return inner_.lookup(p);
    }
    std::atomic<int> calls{0};

private:
    CountyBackend& inner_;
};

class ThrowingBackend final : public CountyBackend {
public:
    std::optional<FipsCode> lookup(GeoPoint p) override {
        if (p.latitude > 40) throw ServiceError("backend down");
        return fips("13121");
    }
};

ImageRecord at(double lat, double lon, const std::string& id) {
    ImageRecord r;
    r.id = id;
    r.point = {lat, lon};
    return r;
}

struct SleepLog {
    std::mutex m;
    std::vector<std::chrono::milliseconds> waits;
    std::function<void(std::chrono::milliseconds)> sleeper() {
        return [this](std::chrono::milliseconds d) {
            std::lock_guard lock(m);
            waits.push_back(d);
        };
    }
};

RemoteGeoOptions remote_options(const std::string& url) {
    RemoteGeoOptions o;
    o.base_url = url;
    o.queries_per_second = 0;
    o.timeout = 2000ms;
    return o;
}

}  // namespace

TEST_SUITE("geo") {

TEST_CASE("quantization keeps four decimals") {
    auto key = quantize({33.74904, -84.38801});
    CHECK(key.lat_e4 == 337490);
    CHECK(key.lon_e4 == -843880);
    CHECK(key.str() == "33.7490,-84.3880");
    CHECK(quantize({-0.00004, 0.00005}).lat_e4 == 0);
}

TEST_CASE("offline fixture written to disk resolves the authored cell") {
    TempDir dir;
    write_rectangle_fixture(dir / "counties.csv", atlanta_fixture().rects());
    auto fixture = RectangleFixture::load(dir / "counties.csv");
    CountyResolver resolver(fixture, nullptr);
    CHECK(resolver.resolve({33.7490, -84.3880}) == fips("13121"));
    CHECK(resolver.resolve({33.7490, -84.3000}) == fips("13089"));
    CHECK_FALSE(resolver.resolve({0.0, 0.0}));
}

TEST_CASE("rectangles are checked in file order") {
    RectangleFixture f({{0, 10, 0, 10, fips("00001")}, {0, 10, 0, 10, fips("00002")}});
    CHECK(f.lookup({5, 5}) == fips("00001"));
}

TEST_CASE("malformed fixtures are rejected") {
    TempDir dir;
    testsupport::write_text(dir / "a.csv", "lat,lon\n");
    CHECK_THROWS_AS(RectangleFixture::load(dir / "a.csv"), DataError);
    testsupport::write_text(dir / "b.csv", "lat_min,lat_max,lon_min,lon_max,fips\n2,1,0,1,13121\n");
    CHECK_THROWS_WITH_AS(RectangleFixture::load(dir / "b.csv"), doctest::Contains("min greater than max"), DataError);
}

TEST_CASE("second resolution is a cache hit") {
    auto fixture = atlanta_fixture();
    CountingBackend backend(fixture);
    GeoCache cache;
    CountyResolver resolver(backend, &cache);
    auto first = resolver.resolve({33.7490, -84.3880});
    auto second = resolver.resolve({33.7490, -84.3880});
    CHECK(first == second);
    CHECK(backend.calls == 1);
    CHECK(resolver.cache_hits() == 1);
    CHECK(resolver.backend_calls() == 1);
}

TEST_CASE("no-county results are not cached") {
    auto fixture = atlanta_fixture();
    CountingBackend backend(fixture);
    GeoCache cache;
    CountyResolver resolver(backend, &cache);
    CHECK_FALSE(resolver.resolve({0, 0}));
    CHECK_FALSE(resolver.resolve({0, 0}));
    CHECK(backend.calls == 2);
    CHECK(cache.size() == 0);
}

TEST_CASE("invalid points are rejected") {
    auto fixture = atlanta_fixture();
    CountyResolver resolver(fixture, nullptr);
    CHECK_THROWS_AS(resolver.resolve({91, 0}), DataError);
}

TEST_CASE("annotate_dataset examples") {
    auto fixture = atlanta_fixture();
    CountyResolver resolver(fixture, nullptr);

    SUBCASE("uniform batch") {
        auto res = annotate_dataset({at(33.749, -84.388, "a"), at(33.75, -84.39, "b"), at(33.76, -84.40, "c")},
                                    resolver);
        CHECK(res.resolved() == 3);
        for (const auto& r : res.records) CHECK(r.fips == fips("13121"));
    }
    SUBCASE("mixed batch with an ocean point") {
        auto res = annotate_dataset({at(33.749, -84.388, "a"), at(30.0, -60.0, "sea"), at(33.75, -84.30, "c")},
                                    resolver);
        CHECK(res.resolved() == 2);
        REQUIRE(res.unresolvable.size() == 1);
        CHECK(res.unresolvable[0] == 1);
        CHECK_FALSE(res.records[1].fips);
        CHECK(res.records[2].fips == fips("13089"));
    }
    SUBCASE("empty batch") {
        auto res = annotate_dataset({}, resolver);
        CHECK(res.records.empty());
        CHECK(res.resolved() == 0);
    }
}

TEST_CASE("backend failures are recorded per record, never aborting the batch") {
    ThrowingBackend backend;
    CountyResolver resolver(backend, nullptr);
    auto res = annotate_dataset({at(33.0, -84.0, "ok"), at(45.0, -84.0, "bad"), at(45.0, -84.0, "bad2")},
                                resolver, 2);
    CHECK(res.resolved() == 1);
    REQUIRE(res.failures.size() == 2);
    CHECK(res.failures[0].index == 1);
    CHECK(res.failures[0].message == "backend down");
    CHECK_FALSE(res.records[1].fips);
}

TEST_CASE("determinism, cache soundness and quantization monotonicity") {
    auto fixture = atlanta_fixture();
    Gen g(21);
    std::vector<ImageRecord> batch;
    for (int i = 0; i < 400; ++i)
        batch.push_back(at(g.uniform(33.65, 33.85), g.uniform(-84.50, -84.20), fmt::format("p{}", i)));

    CountyResolver plain(fixture, nullptr);
    auto cold = annotate_dataset(batch, plain, 4);

    GeoCache cache;
    CountyResolver cached(fixture, &cache);
    auto warm_up = annotate_dataset(batch, cached, 4);
    auto warmed = annotate_dataset(batch, cached, 1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(cold.records[i].fips == warm_up.records[i].fips);
        CHECK(cold.records[i].fips == warmed.records[i].fips);
    }

    for (int i = 0; i < 400; ++i) {
        GeoPoint p{g.uniform(33.65, 33.85), g.uniform(-84.50, -84.20)};
        const auto key = quantize(p);
        // Another point inside the same rounding cell.
        GeoPoint q{(static_cast<double>(key.lat_e4) + g.uniform(-0.49, 0.49)) / 1e4,
                   (static_cast<double>(key.lon_e4) + g.uniform(-0.49, 0.49)) / 1e4};
        REQUIRE(quantize(q) == key);
        CHECK(plain.resolve(p) == plain.resolve(q));
        CHECK(plain.resolve(p) == plain.resolve(p));
    }
}

TEST_CASE("persistent cache reloads and compacts") {
    TempDir dir;
    const auto path = dir / "cache.jsonl";
    {
        auto cache = GeoCache::open(path);
        cache.store({337490, -843880}, fips("13121"));
        cache.store({337490, -843880}, fips("13089"));
        cache.store({1, 2}, fips("00001"));
    }
    CHECK(testsupport::read_text(path).find("13121") != std::string::npos);
    testsupport::write_text(path, testsupport::read_text(path) + "{torn");
    auto reopened = GeoCache::open(path);
    CHECK(reopened.size() == 2);
    CHECK(reopened.find({337490, -843880}) == fips("13089"));
    CHECK(reopened.find({1, 2}) == fips("00001"));
    const auto text = testsupport::read_text(path);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("extract_fips follows a dotted path") {
    CHECK(extract_fips(R"({"County":{"FIPS":"13121","name":"Fulton"}})", "County.FIPS") == fips("13121"));
    CHECK_FALSE(extract_fips(R"({"County":{"FIPS":null}})", "County.FIPS"));
    CHECK_FALSE(extract_fips(R"({"County":null})", "County.FIPS"));
    CHECK(extract_fips(R"({"results":{"fips":1001}})", "results.fips") == fips("01001"));
    CHECK_THROWS_AS(extract_fips(R"({"County":{}})", "County.FIPS"), ServiceError);
    CHECK_THROWS_AS(extract_fips("<html>", "County.FIPS"), ServiceError);
    CHECK_THROWS_AS(extract_fips(R"({"County":{"FIPS":"131"}})", "County.FIPS"), ServiceError);
}

TEST_CASE("remote geocoder: quantized query, retries, failures") {
    LocalServer srv;
    std::atomic<int> hits{0};
    std::atomic<int> fail_first{0};
    std::string last_query;
    std::mutex m;
    srv.server().Get("/block/find", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        {
            std::lock_guard lock(m);
            last_query = req.get_param_value("latitude") + "," + req.get_param_value("longitude");
        }
        if (fail_first > 0) {
            --fail_first;
            res.status = 503;
            return;
        }
        const double lat = std::stod(req.get_param_value("latitude"));
        if (lat < 0) {
            res.set_content(R"({"County":{"FIPS":null}})", "application/json");
            return;
        }
        res.set_content(R"({"County":{"FIPS":"13121"}})", "application/json");
    });
    srv.start();

    SleepLog log;
    RemoteGeocoder geo(remote_options(srv.url("/block/find")), log.sleeper());

    SUBCASE("plain lookup at the cell centre") {
        CountyResolver resolver(geo, nullptr);
        CHECK(resolver.resolve({33.74904, -84.38801}) == fips("13121"));
        CHECK(last_query == "33.7490,-84.3880");
        CHECK(geo.requests_sent() == 1);
        CHECK(log.waits.empty());
    }
    SUBCASE("null county") {
        CHECK_FALSE(geo.lookup({-10, 0}));
    }
    SUBCASE("transient errors are retried with doubling backoff") {
        fail_first = 2;
        CHECK(geo.lookup({33.749, -84.388}) == fips("13121"));
        CHECK(hits == 3);
        CHECK(log.waits == std::vector<std::chrono::milliseconds>{1000ms, 2000ms});
    }
    SUBCASE("persistent errors exhaust the budget") {
        fail_first = 100;
        CHECK_THROWS_WITH_AS(geo.lookup({33.749, -84.388}), doctest::Contains("after 3 attempts"), ServiceError);
        CHECK(hits == 3);
    }
    SUBCASE("failures through the batch are reported, not thrown") {
        fail_first = 100;
        CountyResolver resolver(geo, nullptr);
        auto res = annotate_dataset({at(33.749, -84.388, "a")}, resolver);
        CHECK(res.failures.size() == 1);
    }
}

TEST_CASE("remote geocoder: unreachable endpoint") {
    SleepLog log;
    RemoteGeocoder geo(remote_options(fmt::format("http://127.0.0.1:{}/find", testsupport::closed_port())),
                       log.sleeper());
    CHECK_THROWS_WITH_AS(geo.lookup({33.749, -84.388}), doctest::Contains("no response"), ServiceError);
    CHECK(geo.requests_sent() == 3);
    CHECK(log.waits.size() == 2);
}

TEST_CASE("rate limiter spaces requests") {
    RateLimiter limiter(50.0);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 6; ++i) limiter.acquire();
    CHECK(std::chrono::steady_clock::now() - start >= 95ms);

    RateLimiter off(0.0);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 1000; ++i) off.acquire();
    CHECK(std::chrono::steady_clock::now() - t0 < 50ms);
}

TEST_CASE("http helpers") {
    CHECK(url_encode("http://x.org/a b?c=1&d") == "http%3A%2F%2Fx.org%2Fa%20b%3Fc%3D1%26d");
    CHECK(basic_auth_header_value("Aladdin", "open sesame") == "Basic QWxhZGRpbjpvcGVuIHNlc2FtZQ==");
    HttpGetter g("http://example.org:8080/api/find", 1000ms);
    CHECK(g.origin() == "http://example.org:8080");
    CHECK(g.base_path() == "/api/find");
    CHECK_THROWS_AS(HttpGetter("example.org", 1000ms), ConfigError);
}

}  // TEST_SUITE
