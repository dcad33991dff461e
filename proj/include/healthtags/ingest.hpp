#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "healthtags/types.hpp"

namespace healthtags {

// ---------------------------------------------------------------------------
// Image metadata (JSON-Lines)
// ---------------------------------------------------------------------------

/// One quarantined input problem. Serialized as {"line", "field", "message"}.
struct ValidationIssue {
    std::size_t line = 0;
    std::string field;
    std::string message;

    friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

/// Parses and validates one images.jsonl line. On failure the reason is
/// appended to `issues` and nullopt is returned. Duplicate ids are not
/// detected here because that needs dataset-wide state; see ImageReader.
std::optional<ImageRecord> parse_image_line(std::string_view line, std::size_t line_no,
                                            std::vector<ValidationIssue>& issues);

std::string to_json_line(const ImageRecord& record);

/// Streams validated records out of an images.jsonl file in file order.
/// Invalid lines never stop the stream; they are collected in issues().
class ImageReader {
public:
    /// Throws DataError if the file cannot be opened.
    explicit ImageReader(const std::filesystem::path& path);
    explicit ImageReader(std::istream& in);

    std::optional<ImageRecord> next();

    const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }
    std::size_t lines_read() const noexcept { return line_; }

private:
    std::ifstream owned_;
    std::istream* in_;
    std::size_t line_ = 0;
    std::vector<ValidationIssue> issues_;
    std::map<std::string, std::size_t, std::less<>> seen_ids_;
};

struct ImageLoad {
    std::vector<ImageRecord> records;
    std::vector<ValidationIssue> issues;
    std::size_t lines_read = 0;
};

ImageLoad read_images(const std::filesystem::path& path);
ImageLoad read_images(std::istream& in);

void write_images(const std::filesystem::path& path, std::span<const ImageRecord> records);
void write_issue_report(const std::filesystem::path& path,
                        std::span<const ValidationIssue> issues);

struct DatasetManifest {
    std::map<std::string, std::size_t> rows_per_source;
    std::size_t images = 0;
    std::size_t rejected_lines = 0;
    std::size_t with_user_tags = 0;
    std::size_t with_machine_tags = 0;

    double user_tagged_fraction() const noexcept;
    double machine_tagged_fraction() const noexcept;
};

DatasetManifest summarize_images(std::span<const ImageRecord> records, std::size_t rejected_lines);
std::string manifest_json(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Health statistics
// ---------------------------------------------------------------------------

enum class HealthStat {
    smokers,
    obese,
    food_env_index,
    physically_inactive,
    excessive_drinking,
    alcohol_impaired_driving_deaths,
    diabetic,
    food_insecure,
    limited_access_healthy_food,
};

inline constexpr std::array<HealthStat, 9> kAllHealthStats = {
    HealthStat::smokers,
    HealthStat::obese,
    HealthStat::food_env_index,
    HealthStat::physically_inactive,
    HealthStat::excessive_drinking,
    HealthStat::alcohol_impaired_driving_deaths,
    HealthStat::diabetic,
    HealthStat::food_insecure,
    HealthStat::limited_access_healthy_food,
};

std::string_view stat_name(HealthStat stat) noexcept;
std::string_view stat_display_name(HealthStat stat) noexcept;
std::optional<HealthStat> parse_stat(std::string_view name) noexcept;

class HealthStatTable {
public:
    /// Returns false if the (fips, stat) pair is already present.
    bool insert(const FipsCode& fips, HealthStat stat, double value);

    std::optional<double> value(const FipsCode& fips, HealthStat stat) const;

    /// Values for `counties` in order. Throws DataError naming the first
    /// county without a value.
    std::vector<double> column(std::span<const FipsCode> counties, HealthStat stat) const;

    std::size_t size() const noexcept { return values_.size(); }
    const std::map<std::pair<FipsCode, HealthStat>, double>& entries() const noexcept {
        return values_;
    }

private:
    std::map<std::pair<FipsCode, HealthStat>, double> values_;
};

/// Reads `fips,stat_name,value`. Unknown statistics, duplicates and
/// non-numeric values are fatal (DataError).
HealthStatTable read_health_csv(const std::filesystem::path& path);
void write_health_csv(const std::filesystem::path& path, const HealthStatTable& table);

// ---------------------------------------------------------------------------
// Demographics
// ---------------------------------------------------------------------------

/// Default column schema (age, race, income).
inline constexpr std::array<std::string_view, 5> kDefaultDemographicColumns = {
    "under_18", "over_65", "female", "afro_hispanic", "log_median_income",
};

struct DemographicsTable {
    std::vector<std::string> columns;
    std::map<FipsCode, std::vector<double>> rows;

    /// Throws DataError if the county is absent.
    const std::vector<double>& row(const FipsCode& fips) const;
};

DemographicsTable read_demographics_csv(const std::filesystem::path& path);
void write_demographics_csv(const std::filesystem::path& path, const DemographicsTable& table);

/// Optional `fips,name` lookup used to label report output.
std::map<FipsCode, std::string> read_county_names(const std::filesystem::path& path);

}  // namespace healthtags
