#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace healthtags {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);

// Quotes a field only when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

// Line-oriented CSV reader that tracks 1-based line numbers and skips blank lines.
class CsvReader {
public:
    explicit CsvReader(const std::filesystem::path& path);

    std::optional<std::vector<std::string>> next();
    std::size_t line_number() const noexcept { return line_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::size_t line_ = 0;
};

std::optional<double> parse_double(std::string_view text);

}  // namespace healthtags
