#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace healthtags {

/// Five-digit county identifier: two state digits followed by three county digits.
class FipsCode {
public:
    /// Throws DataError unless `text` is exactly five ASCII digits.
    static FipsCode parse(std::string_view text);
    static std::optional<FipsCode> try_parse(std::string_view text) noexcept;

    const std::string& str() const noexcept { return code_; }
    int value() const noexcept;

    friend auto operator<=>(const FipsCode&, const FipsCode&) = default;
    friend bool operator==(const FipsCode&, const FipsCode&) = default;

private:
    explicit FipsCode(std::string code) : code_(std::move(code)) {}
    std::string code_;
};

struct GeoPoint {
    double latitude = 0.0;
    double longitude = 0.0;

    bool valid() const noexcept;
    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct MachineTag {
    std::string tag;
    double confidence = 0.0;  // percent

    friend bool operator==(const MachineTag&, const MachineTag&) = default;
};

struct ImageRecord {
    std::string id;
    GeoPoint point;
    std::int64_t timestamp = 0;  // UTC seconds
    std::vector<std::string> user_tags;  // sorted, unique, normalized
    // Absent until the tagging stage has run for this image.
    std::optional<std::vector<MachineTag>> machine_tags;
    std::optional<FipsCode> fips;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Lowercase, trim surrounding whitespace, and strip a single leading '#'.
std::string normalize_tag(std::string_view raw);

}  // namespace healthtags
