#include "healthtags/geo.hpp"

#include <cmath>
#include <fstream>
#include <thread>
#include <variant>

#include <fmt/format.h>
#include <json.hpp>

#include "healthtags/csv.hpp"
#include "healthtags/error.hpp"

namespace healthtags {

using nlohmann::json;

GeoPoint CellKey::center() const noexcept {
    return {static_cast<double>(lat_e4) / 1e4, static_cast<double>(lon_e4) / 1e4};
}

std::string CellKey::str() const {
    const auto p = center();
    return fmt::format("{:.4f},{:.4f}", p.latitude, p.longitude);
}

CellKey quantize(GeoPoint point) noexcept {
    return {std::llround(point.latitude * 1e4), std::llround(point.longitude * 1e4)};
}

// ---------------------------------------------------------------------------

RectangleFixture RectangleFixture::load(const std::filesystem::path& path) {
    CsvReader reader(path);
    auto header = reader.next();
    const std::vector<std::string> expected{"lat_min", "lat_max", "lon_min", "lon_max", "fips"};
    if (!header || *header != expected)
        throw DataError(path.string() + ": expected header lat_min,lat_max,lon_min,lon_max,fips");
    std::vector<CountyRect> rects;
    while (auto row = reader.next()) {
        const auto where = path.string() + ":" + std::to_string(reader.line_number());
        if (row->size() != 5) throw DataError(where + ": expected 5 fields");
        double bounds[4];
        for (int i = 0; i < 4; ++i) {
            auto v = parse_double((*row)[i]);
            if (!v) throw DataError(where + ": non-numeric bound '" + (*row)[i] + "'");
            bounds[i] = *v;
        }
        if (bounds[0] > bounds[1] || bounds[2] > bounds[3])
            throw DataError(where + ": rectangle has min greater than max");
        rects.push_back({bounds[0], bounds[1], bounds[2], bounds[3], FipsCode::parse((*row)[4])});
    }
    return RectangleFixture(std::move(rects));
}

std::optional<FipsCode> RectangleFixture::lookup(GeoPoint point) {
    for (const auto& r : rects_)
        if (r.contains(point)) return r.fips;
    return std::nullopt;
}

void write_rectangle_fixture(const std::filesystem::path& path,
                             const std::vector<CountyRect>& rects) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "lat_min,lat_max,lon_min,lon_max,fips\n";
    for (const auto& r : rects)
        out << fmt::format("{:.4f},{:.4f},{:.4f},{:.4f},{}\n", r.lat_min, r.lat_max, r.lon_min,
                           r.lon_max, r.fips.str());
}

// ---------------------------------------------------------------------------

std::optional<FipsCode> extract_fips(std::string_view body, std::string_view dotted_path) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw ServiceError("geocoder returned malformed JSON");
    const json* node = &doc;
    std::size_t start = 0;
    while (start <= dotted_path.size()) {
        auto dot = dotted_path.find('.', start);
        auto key = dotted_path.substr(start, dot == std::string_view::npos ? dotted_path.npos
                                                                            : dot - start);
        if (node->is_null()) return std::nullopt;
        if (!node->is_object() || !node->contains(std::string(key)))
            throw ServiceError("geocoder response has no '" + std::string(dotted_path) + "'");
        node = &(*node)[std::string(key)];
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    if (node->is_null()) return std::nullopt;
    if (node->is_string()) {
        auto code = FipsCode::try_parse(node->get<std::string>());
        if (!code) throw ServiceError("geocoder returned an invalid FIPS code");
        return code;
    }
    if (node->is_number_unsigned()) return FipsCode::parse(fmt::format("{:05d}", node->get<unsigned>()));
    throw ServiceError("geocoder returned a FIPS of unexpected type");
}

RemoteGeocoder::RemoteGeocoder(RemoteGeoOptions options,
                               std::function<void(std::chrono::milliseconds)> sleeper)
    : options_(std::move(options)),
      http_(options_.base_url, options_.timeout),
      limiter_(options_.queries_per_second),
      sleeper_(std::move(sleeper)) {}

std::optional<FipsCode> RemoteGeocoder::lookup(GeoPoint point) {
    const auto target = fmt::format("{}?latitude={:.4f}&longitude={:.4f}&format=json",
                                    http_.base_path().empty() ? "/" : http_.base_path(),
                                    point.latitude, point.longitude);
    std::string last_error = "no attempt made";
    std::function<std::optional<HttpResponse>()> attempt = [&]() -> std::optional<HttpResponse> {
        limiter_.acquire();
        ++requests_;
        auto res = http_.get(target);
        if (!res) {
            last_error = "no response from " + http_.origin();
            return std::nullopt;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            return std::nullopt;
        }
        return res;
    };
    auto res = with_retries<HttpResponse>(options_.retry, attempt, sleeper_);
    if (!res)
        throw ServiceError("geocoder failed after " + std::to_string(options_.retry.max_attempts) +
                           " attempts: " + last_error);
    if (res->status != 200)
        throw ServiceError("geocoder answered HTTP " + std::to_string(res->status));
    return extract_fips(res->body, options_.fips_json_path);
}

// ---------------------------------------------------------------------------

GeoCache GeoCache::open(const std::filesystem::path& path) {
    GeoCache cache;
    cache.path_ = path;
    std::size_t lines = 0;
    if (std::ifstream in(path); in) {
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            ++lines;
            json obj = json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.is_object()) continue;  // torn append
            try {
                CellKey key{obj.at("lat_e4").get<std::int64_t>(), obj.at("lon_e4").get<std::int64_t>()};
                auto fips = FipsCode::try_parse(obj.at("fips").get<std::string>());
                if (!fips) continue;
                cache.entries_.insert_or_assign(
                    key, GeoCacheEntry{key, *fips, obj.value("retrieved_at", std::int64_t{0})});
            } catch (const json::exception&) {
                continue;
            }
        }
    }
    if (lines != cache.entries_.size() || !std::filesystem::exists(path)) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write geo cache " + path.string());
        for (const auto& [key, e] : cache.entries_)
            out << json{{"lat_e4", key.lat_e4}, {"lon_e4", key.lon_e4}, {"fips", e.fips.str()},
                        {"retrieved_at", e.retrieved_at}}
                       .dump()
                << '\n';
    }
    return cache;
}

std::optional<FipsCode> GeoCache::find(const CellKey& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.fips;
}

void GeoCache::store(const CellKey& key, const FipsCode& fips) {
    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::lock_guard lock(mutex_);
    auto [it, fresh] = entries_.insert_or_assign(key, GeoCacheEntry{key, fips, now});
    (void)it;
    (void)fresh;
    if (path_) {
        std::ofstream out(*path_, std::ios::binary | std::ios::app);
        if (!out) throw DataError("cannot append to geo cache " + path_->string());
        out << json{{"lat_e4", key.lat_e4}, {"lon_e4", key.lon_e4}, {"fips", fips.str()},
                    {"retrieved_at", now}}
                   .dump()
            << '\n';
    }
}

std::size_t GeoCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

// ---------------------------------------------------------------------------

std::optional<FipsCode> CountyResolver::resolve(GeoPoint point) {
    if (!point.valid())
        throw DataError(fmt::format("point ({}, {}) is outside valid coordinate ranges",
                                    point.latitude, point.longitude));
    const auto key = quantize(point);
    if (cache_) {
        if (auto hit = cache_->find(key)) {
            ++cache_hits_;
            return hit;
        }
    }
    ++backend_calls_;
    auto fips = backend_.lookup(key.center());
    if (fips && cache_) cache_->store(key, *fips);
    return fips;
}

AnnotationResult annotate_dataset(std::vector<ImageRecord> records, CountyResolver& resolver,
                                  std::size_t max_in_flight) {
    std::map<CellKey, std::size_t> slot_of;
    std::vector<CellKey> cells;
    std::vector<std::size_t> record_slot(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto key = quantize(records[i].point);
        auto [it, fresh] = slot_of.emplace(key, cells.size());
        if (fresh) cells.push_back(key);
        record_slot[i] = it->second;
    }

    using Outcome = std::variant<std::optional<FipsCode>, std::string>;
    std::vector<Outcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                outcomes[i] = resolver.resolve(cells[i].center());
            } catch (const std::exception& e) {
                outcomes[i] = std::string(e.what());
            }
        }
    };
    const auto n_workers = std::min(std::max<std::size_t>(max_in_flight, 1), cells.size());
    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
    }

    AnnotationResult result;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& outcome = outcomes[record_slot[i]];
        if (const auto* err = std::get_if<std::string>(&outcome)) {
            records[i].fips.reset();
            result.failures.push_back({i, *err});
        } else if (const auto& fips = std::get<std::optional<FipsCode>>(outcome)) {
            records[i].fips = *fips;
        } else {
            records[i].fips.reset();
            result.unresolvable.push_back(i);
        }
    }
    result.records = std::move(records);
    return result;
}

}  // namespace healthtags
