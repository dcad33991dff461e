#include "healthtags/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>

#include <json.hpp>

#include "healthtags/csv.hpp"
#include "healthtags/error.hpp"

namespace healthtags {

using nlohmann::json;

namespace {

struct Rejection {
    std::string field;
    std::string message;
};

ImageRecord decode_image(const json& obj) {
    if (!obj.is_object()) throw Rejection{"", "line is not a JSON object"};
    ImageRecord rec;

    auto id = obj.find("id");
    if (id == obj.end() || !id->is_string()) throw Rejection{"id", "missing or non-string id"};
    rec.id = id->get<std::string>();
    if (rec.id.empty()) throw Rejection{"id", "empty id"};

    auto lat = obj.find("lat");
    if (lat == obj.end() || !lat->is_number()) throw Rejection{"lat", "missing or non-numeric latitude"};
    auto lon = obj.find("lon");
    if (lon == obj.end() || !lon->is_number()) throw Rejection{"lon", "missing or non-numeric longitude"};
    rec.point = {lat->get<double>(), lon->get<double>()};
    if (!(rec.point.latitude >= -90.0 && rec.point.latitude <= 90.0))
        throw Rejection{"lat", "latitude out of range"};
    if (!(rec.point.longitude >= -180.0 && rec.point.longitude <= 180.0))
        throw Rejection{"lon", "longitude out of range"};

    auto ts = obj.find("ts");
    if (ts == obj.end() || !ts->is_number_integer()) throw Rejection{"ts", "missing or non-integer timestamp"};
    rec.timestamp = ts->get<std::int64_t>();

    if (auto tags = obj.find("user_tags"); tags != obj.end() && !tags->is_null()) {
        if (!tags->is_array()) throw Rejection{"user_tags", "user_tags is not an array"};
        for (const auto& t : *tags) {
            if (!t.is_string()) throw Rejection{"user_tags", "non-string user tag"};
            auto norm = normalize_tag(t.get<std::string>());
            if (!norm.empty()) rec.user_tags.push_back(std::move(norm));
        }
        std::sort(rec.user_tags.begin(), rec.user_tags.end());
        rec.user_tags.erase(std::unique(rec.user_tags.begin(), rec.user_tags.end()),
                            rec.user_tags.end());
    }

    if (auto tags = obj.find("machine_tags"); tags != obj.end() && !tags->is_null()) {
        if (!tags->is_array()) throw Rejection{"machine_tags", "machine_tags is not an array"};
        std::vector<MachineTag> machine;
        for (const auto& t : *tags) {
            if (!t.is_object()) throw Rejection{"machine_tags", "machine tag is not an object"};
            auto name = t.find("tag");
            auto conf = t.find("confidence");
            if (name == t.end() || !name->is_string())
                throw Rejection{"machine_tags", "machine tag without a tag string"};
            if (conf == t.end() || !conf->is_number())
                throw Rejection{"machine_tags", "machine tag without a numeric confidence"};
            MachineTag mt{normalize_tag(name->get<std::string>()), conf->get<double>()};
            if (mt.tag.empty()) throw Rejection{"machine_tags", "empty machine tag"};
            if (!(mt.confidence >= 0.0 && mt.confidence <= 100.0))
                throw Rejection{"machine_tags", "confidence out of range"};
            machine.push_back(std::move(mt));
        }
        rec.machine_tags = std::move(machine);
    }

    if (auto fips = obj.find("fips"); fips != obj.end() && !fips->is_null()) {
        if (!fips->is_string()) throw Rejection{"fips", "non-string FIPS code"};
        auto code = FipsCode::try_parse(fips->get<std::string>());
        if (!code) throw Rejection{"fips", "FIPS code must be 5 digits"};
        rec.fips = *code;
    }
    return rec;
}

}  // namespace

std::optional<ImageRecord> parse_image_line(std::string_view line, std::size_t line_no,
                                            std::vector<ValidationIssue>& issues) {
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) {
        issues.push_back({line_no, "", "malformed JSON"});
        return std::nullopt;
    }
    try {
        return decode_image(obj);
    } catch (const Rejection& r) {
        issues.push_back({line_no, r.field, r.message});
    } catch (const json::exception& e) {
        issues.push_back({line_no, "", e.what()});
    }
    return std::nullopt;
}

std::string to_json_line(const ImageRecord& rec) {
    json obj;
    obj["id"] = rec.id;
    obj["lat"] = rec.point.latitude;
    obj["lon"] = rec.point.longitude;
    obj["ts"] = rec.timestamp;
    obj["user_tags"] = rec.user_tags;
    if (rec.machine_tags) {
        json arr = json::array();
        for (const auto& mt : *rec.machine_tags)
            arr.push_back({{"tag", mt.tag}, {"confidence", mt.confidence}});
        obj["machine_tags"] = std::move(arr);
    }
    if (rec.fips) obj["fips"] = rec.fips->str();
    return obj.dump();
}

ImageReader::ImageReader(const std::filesystem::path& path) : owned_(path), in_(&owned_) {
    if (!owned_) throw DataError("cannot open image file " + path.string());
}

ImageReader::ImageReader(std::istream& in) : in_(&in) {}

std::optional<ImageRecord> ImageReader::next() {
    std::string line;
    while (std::getline(*in_, line)) {
        ++line_;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto rec = parse_image_line(line, line_, issues_);
        if (!rec) continue;
        auto [it, fresh] = seen_ids_.emplace(rec->id, line_);
        if (!fresh) {
            issues_.push_back({line_, "id",
                               "duplicate id (first seen on line " + std::to_string(it->second) + ")"});
            continue;
        }
        return rec;
    }
    return std::nullopt;
}

namespace {

ImageLoad drain(ImageReader& reader) {
    ImageLoad load;
    while (auto rec = reader.next()) load.records.push_back(*std::move(rec));
    load.issues = reader.issues();
    load.lines_read = reader.lines_read();
    return load;
}

}  // namespace

ImageLoad read_images(const std::filesystem::path& path) {
    ImageReader reader(path);
    return drain(reader);
}

ImageLoad read_images(std::istream& in) {
    ImageReader reader(in);
    return drain(reader);
}

void write_images(const std::filesystem::path& path, std::span<const ImageRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& rec : records) out << to_json_line(rec) << '\n';
}

void write_issue_report(const std::filesystem::path& path,
                        std::span<const ValidationIssue> issues) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& issue : issues)
        out << json{{"line", issue.line}, {"field", issue.field}, {"message", issue.message}}.dump()
            << '\n';
}

double DatasetManifest::user_tagged_fraction() const noexcept {
    return images == 0 ? 0.0 : static_cast<double>(with_user_tags) / static_cast<double>(images);
}

double DatasetManifest::machine_tagged_fraction() const noexcept {
    return images == 0 ? 0.0
                       : static_cast<double>(with_machine_tags) / static_cast<double>(images);
}

DatasetManifest summarize_images(std::span<const ImageRecord> records, std::size_t rejected_lines) {
    DatasetManifest m;
    m.images = records.size();
    m.rejected_lines = rejected_lines;
    for (const auto& rec : records) {
        if (!rec.user_tags.empty()) ++m.with_user_tags;
        if (rec.machine_tags && !rec.machine_tags->empty()) ++m.with_machine_tags;
    }
    return m;
}

std::string manifest_json(const DatasetManifest& m) {
    json obj;
    obj["rows_per_source"] = m.rows_per_source;
    obj["images"] = m.images;
    obj["rejected_lines"] = m.rejected_lines;
    obj["images_with_user_tags"] = m.with_user_tags;
    obj["images_with_machine_tags"] = m.with_machine_tags;
    obj["user_tagged_fraction"] = m.user_tagged_fraction();
    obj["machine_tagged_fraction"] = m.machine_tagged_fraction();
    return obj.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

struct StatNames {
    HealthStat stat;
    std::string_view key;
    std::string_view display;
};

constexpr std::array<StatNames, 9> kStatNames = {{
    {HealthStat::smokers, "smokers", "Smokers"},
    {HealthStat::obese, "obese", "Obese"},
    {HealthStat::food_env_index, "food_env_index", "Food Env. Index"},
    {HealthStat::physically_inactive, "physically_inactive", "Physically inactive"},
    {HealthStat::excessive_drinking, "excessive_drinking", "Excessive Drinking"},
    {HealthStat::alcohol_impaired_driving_deaths, "alcohol_impaired_driving_deaths",
     "Alcohol Impaired"},
    {HealthStat::diabetic, "diabetic", "Diabetic"},
    {HealthStat::food_insecure, "food_insecure", "Food insecure"},
    {HealthStat::limited_access_healthy_food, "limited_access_healthy_food", "Limited access"},
}};

}  // namespace

std::string_view stat_name(HealthStat stat) noexcept {
    return kStatNames[static_cast<std::size_t>(stat)].key;
}

std::string_view stat_display_name(HealthStat stat) noexcept {
    return kStatNames[static_cast<std::size_t>(stat)].display;
}

std::optional<HealthStat> parse_stat(std::string_view name) noexcept {
    for (const auto& s : kStatNames)
        if (s.key == name) return s.stat;
    return std::nullopt;
}

bool HealthStatTable::insert(const FipsCode& fips, HealthStat stat, double value) {
    return values_.emplace(std::pair{fips, stat}, value).second;
}

std::optional<double> HealthStatTable::value(const FipsCode& fips, HealthStat stat) const {
    auto it = values_.find({fips, stat});
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::vector<double> HealthStatTable::column(std::span<const FipsCode> counties,
                                            HealthStat stat) const {
    std::vector<double> out;
    out.reserve(counties.size());
    for (const auto& c : counties) {
        auto v = value(c, stat);
        if (!v)
            throw DataError("county " + c.str() + " has no value for " +
                            std::string(stat_name(stat)));
        out.push_back(*v);
    }
    return out;
}

namespace {

std::string where(const CsvReader& reader) {
    return reader.path().string() + ":" + std::to_string(reader.line_number());
}

void expect_header(CsvReader& reader, std::span<const std::string_view> expected) {
    auto header = reader.next();
    if (!header) throw DataError(reader.path().string() + ": empty file, header expected");
    bool ok = header->size() == expected.size();
    for (std::size_t i = 0; ok && i < expected.size(); ++i) ok = (*header)[i] == expected[i];
    if (!ok) {
        std::string want;
        for (auto e : expected) want += (want.empty() ? "" : ",") + std::string(e);
        throw DataError(where(reader) + ": expected header " + want);
    }
}

}  // namespace

HealthStatTable read_health_csv(const std::filesystem::path& path) {
    CsvReader reader(path);
    constexpr std::array<std::string_view, 3> header{"fips", "stat_name", "value"};
    expect_header(reader, header);

    HealthStatTable table;
    std::map<std::pair<FipsCode, HealthStat>, std::size_t> first_line;
    while (auto row = reader.next()) {
        if (row->size() != 3) throw DataError(where(reader) + ": expected 3 fields");
        auto fips = FipsCode::try_parse((*row)[0]);
        if (!fips) throw DataError(where(reader) + ": invalid FIPS code '" + (*row)[0] + "'");
        auto stat = parse_stat((*row)[1]);
        if (!stat) throw DataError(where(reader) + ": unknown statistic '" + (*row)[1] + "'");
        auto value = parse_double((*row)[2]);
        if (!value) throw DataError(where(reader) + ": non-numeric value '" + (*row)[2] + "'");
        auto [it, fresh] = first_line.emplace(std::pair{*fips, *stat}, reader.line_number());
        if (!fresh)
            throw DataError(where(reader) + ": duplicate entry for (" + fips->str() + ", " +
                            (*row)[1] + "), first on line " + std::to_string(it->second));
        table.insert(*fips, *stat, *value);
    }
    return table;
}

void write_health_csv(const std::filesystem::path& path, const HealthStatTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "fips,stat_name,value\n";
    for (const auto& [key, value] : table.entries())
        out << key.first.str() << ',' << stat_name(key.second) << ',' << json(value).dump() << '\n';
}

const std::vector<double>& DemographicsTable::row(const FipsCode& fips) const {
    auto it = rows.find(fips);
    if (it == rows.end()) throw DataError("no demographics for county " + fips.str());
    return it->second;
}

DemographicsTable read_demographics_csv(const std::filesystem::path& path) {
    CsvReader reader(path);
    auto header = reader.next();
    if (!header || header->empty() || (*header)[0] != "fips")
        throw DataError(path.string() + ": header must start with 'fips'");
    if (header->size() < 2) throw DataError(path.string() + ": no demographic columns in header");

    DemographicsTable table;
    table.columns.assign(header->begin() + 1, header->end());
    while (auto row = reader.next()) {
        auto fips = FipsCode::try_parse(row->empty() ? "" : (*row)[0]);
        if (!fips) throw DataError(where(reader) + ": invalid FIPS code");
        if (row->size() != header->size())
            throw DataError(where(reader) + ": county " + fips->str() + " has " +
                            std::to_string(row->size() - 1) + " values, expected " +
                            std::to_string(table.columns.size()));
        std::vector<double> values;
        for (std::size_t i = 1; i < row->size(); ++i) {
            const auto& cell = (*row)[i];
            const auto& column = table.columns[i - 1];
            if (cell.find_first_not_of(" \t") == std::string::npos)
                throw DataError(where(reader) + ": county " + fips->str() + " is missing " + column);
            auto v = parse_double(cell);
            if (!v)
                throw DataError(where(reader) + ": county " + fips->str() + " has non-numeric " +
                                column + " '" + cell + "'");
            values.push_back(*v);
        }
        if (!table.rows.emplace(*fips, std::move(values)).second)
            throw DataError(where(reader) + ": county " + fips->str() + " appears twice");
    }
    return table;
}

void write_demographics_csv(const std::filesystem::path& path, const DemographicsTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "fips";
    for (const auto& c : table.columns) out << ',' << csv_escape(c);
    out << '\n';
    for (const auto& [fips, values] : table.rows) {
        out << fips.str();
        for (double v : values) out << ',' << json(v).dump();
        out << '\n';
    }
}

std::map<FipsCode, std::string> read_county_names(const std::filesystem::path& path) {
    CsvReader reader(path);
    constexpr std::array<std::string_view, 2> header{"fips", "name"};
    expect_header(reader, header);
    std::map<FipsCode, std::string> names;
    while (auto row = reader.next()) {
        if (row->size() != 2) throw DataError(where(reader) + ": expected 2 fields");
        names[FipsCode::parse((*row)[0])] = (*row)[1];
    }
    return names;
}

}  // namespace healthtags
