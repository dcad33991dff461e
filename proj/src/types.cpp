#include "healthtags/types.hpp"

#include <algorithm>
#include <cctype>

#include "healthtags/error.hpp"

namespace healthtags {

FipsCode FipsCode::parse(std::string_view text) {
    if (auto code = try_parse(text)) return *std::move(code);
    throw DataError("invalid FIPS code '" + std::string(text) + "' (expected 5 digits)");
}

std::optional<FipsCode> FipsCode::try_parse(std::string_view text) noexcept {
    if (text.size() != 5) return std::nullopt;
    if (!std::all_of(text.begin(), text.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; }))
        return std::nullopt;
    return FipsCode(std::string(text));
}

int FipsCode::value() const noexcept {
    int v = 0;
    for (char c : code_) v = v * 10 + (c - '0');
    return v;
}

bool GeoPoint::valid() const noexcept {
    return latitude >= -90.0 && latitude <= 90.0 && longitude >= -180.0 &&
           longitude <= 180.0;
}

std::string normalize_tag(std::string_view raw) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!raw.empty() && is_space(raw.front())) raw.remove_prefix(1);
    while (!raw.empty() && is_space(raw.back())) raw.remove_suffix(1);
    if (!raw.empty() && raw.front() == '#') raw.remove_prefix(1);
    while (!raw.empty() && is_space(raw.front())) raw.remove_prefix(1);
    std::string out(raw);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace healthtags
