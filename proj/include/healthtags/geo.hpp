#pragma once

#include <atomic>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "healthtags/http.hpp"
#include "healthtags/types.hpp"

namespace healthtags {

/// A point rounded to 4 decimal places, stored as integer ten-thousandths so
/// equality is exact.
struct CellKey {
    std::int64_t lat_e4 = 0;
    std::int64_t lon_e4 = 0;

    GeoPoint center() const noexcept;
    std::string str() const;  // "33.7490,-84.3880"

    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

CellKey quantize(GeoPoint point) noexcept;

/// Maps a (quantized) point to a county. nullopt means the point lies outside
/// the territory the backend covers. Throws ServiceError if the backend could
/// not answer.
class CountyBackend {
public:
    virtual ~CountyBackend() = default;
    virtual std::optional<FipsCode> lookup(GeoPoint point) = 0;
};

struct CountyRect {
    double lat_min, lat_max, lon_min, lon_max;
    FipsCode fips;

    bool contains(GeoPoint p) const noexcept {
        return p.latitude >= lat_min && p.latitude <= lat_max && p.longitude >= lon_min &&
               p.longitude <= lon_max;
    }
};

/// Offline backend: rectangles checked in file order, first match wins.
class RectangleFixture final : public CountyBackend {
public:
    explicit RectangleFixture(std::vector<CountyRect> rects) : rects_(std::move(rects)) {}

    /// CSV with header lat_min,lat_max,lon_min,lon_max,fips.
    static RectangleFixture load(const std::filesystem::path& path);

    std::optional<FipsCode> lookup(GeoPoint point) override;
    const std::vector<CountyRect>& rects() const noexcept { return rects_; }

private:
    std::vector<CountyRect> rects_;
};

void write_rectangle_fixture(const std::filesystem::path& path, const std::vector<CountyRect>& rects);

struct RemoteGeoOptions {
    std::string base_url;                      // e.g. https://geo.fcc.gov/api/census/block/find
    std::string fips_json_path = "County.FIPS";
    RetryPolicy retry;
    double queries_per_second = 10.0;
    std::chrono::milliseconds timeout{10000};
};

/// Client for an FCC-Block-API-shaped endpoint:
/// GET <base>?latitude=<lat>&longitude=<lon>&format=json.
class RemoteGeocoder final : public CountyBackend {
public:
    explicit RemoteGeocoder(RemoteGeoOptions options,
                            std::function<void(std::chrono::milliseconds)> sleeper = sleep_for);

    std::optional<FipsCode> lookup(GeoPoint point) override;

    std::size_t requests_sent() const noexcept { return requests_.load(); }

private:
    RemoteGeoOptions options_;
    HttpGetter http_;
    RateLimiter limiter_;
    std::function<void(std::chrono::milliseconds)> sleeper_;
    std::atomic<std::size_t> requests_{0};
};

/// Extracts the county FIPS from a response body by following a dotted JSON
/// path. A null value yields nullopt; a missing path or malformed body throws
/// ServiceError.
std::optional<FipsCode> extract_fips(std::string_view body, std::string_view dotted_path);

struct GeoCacheEntry {
    CellKey key;
    FipsCode fips;
    std::int64_t retrieved_at = 0;  // unix seconds
};

/// Persistent point→county cache. The file is JSON-Lines, appended on every
/// store and compacted (last entry per key wins) when opened.
class GeoCache {
public:
    GeoCache() = default;  // in-memory only
    GeoCache(GeoCache&& other) noexcept
        : path_(std::move(other.path_)), entries_(std::move(other.entries_)) {}
    GeoCache& operator=(GeoCache&&) = delete;
    static GeoCache open(const std::filesystem::path& path);

    std::optional<FipsCode> find(const CellKey& key) const;
    void store(const CellKey& key, const FipsCode& fips);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::optional<std::filesystem::path> path_;
    std::map<CellKey, GeoCacheEntry> entries_;
};

class CountyResolver {
public:
    /// `cache` may be null. Both references must outlive the resolver.
    CountyResolver(CountyBackend& backend, GeoCache* cache) : backend_(backend), cache_(cache) {}

    /// Resolves the quantized point, consulting the cache first.
    /// Throws DataError for an invalid point and propagates ServiceError.
    std::optional<FipsCode> resolve(GeoPoint point);

    std::size_t cache_hits() const noexcept { return cache_hits_.load(); }
    std::size_t backend_calls() const noexcept { return backend_calls_.load(); }

private:
    CountyBackend& backend_;
    GeoCache* cache_;
    std::atomic<std::size_t> cache_hits_{0};
    std::atomic<std::size_t> backend_calls_{0};
};

struct ResolutionFailure {
    std::size_t index;
    std::string message;
};

struct AnnotationResult {
    std::vector<ImageRecord> records;  // input order; fips set where resolved
    std::vector<std::size_t> unresolvable;
    std::vector<ResolutionFailure> failures;

    std::size_t resolved() const noexcept {
        return records.size() - unresolvable.size() - failures.size();
    }
};

/// Fills `fips` on every record. Each distinct quantized cell is resolved once;
/// up to `max_in_flight` cells are resolved concurrently. Failures are recorded
/// per record and never abort the batch.
AnnotationResult annotate_dataset(std::vector<ImageRecord> records, CountyResolver& resolver,
                                  std::size_t max_in_flight = 4);

}  // namespace healthtags
