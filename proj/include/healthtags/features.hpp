#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "healthtags/ingest.hpp"
#include "healthtags/types.hpp"

namespace healthtags {

enum class TagSource { user, machine };

/// Feature blocks: user tags, machine (image-recognition) tags, demographics.
enum class Block { U, I, D };

std::string_view block_name(Block block) noexcept;

/// Non-empty subset of {U, I, D}. Names are written in canonical order, e.g. "U+I+D".
class FeatureSet {
public:
    /// Accepts any order ("D+U"); throws ConfigError on unknown or empty input.
    static FeatureSet parse(std::string_view text);
    static FeatureSet of(std::initializer_list<Block> blocks);

    /// U, I, D, U+D, I+D, U+I+D.
    static const std::array<FeatureSet, 6>& table_order();

    bool contains(Block b) const noexcept { return (mask_ >> static_cast<int>(b)) & 1U; }
    std::string name() const;

    friend bool operator==(FeatureSet, FeatureSet) = default;

private:
    explicit FeatureSet(unsigned mask) : mask_(mask) {}
    unsigned mask_ = 0;
};

/// Tags kept as feature columns, in lexicographic order, with the number of
/// distinct counties each appears in.
struct TagVocabulary {
    std::vector<std::string> tags;
    std::vector<std::size_t> support;
    std::map<std::string, std::size_t, std::less<>> index;

    std::size_t size() const noexcept { return tags.size(); }
    std::optional<std::size_t> column(std::string_view tag) const;
};

/// Counties holding the `n` largest image counts, returned in ascending FIPS
/// order. Count ties favour the smaller FIPS. Throws DataError when fewer than
/// `n` distinct counties are present.
std::vector<FipsCode> select_top_counties(std::span<const ImageRecord> records, std::size_t n);

struct CountySample {
    std::vector<ImageRecord> records;  // grouped by county (ascending), file order within
    std::vector<std::pair<FipsCode, std::size_t>> shortfalls;  // counties with fewer than m
};

/// Uniform draw of `m` records per county without replacement. Each county
/// gets its own generator seeded from (seed, FIPS), so the result does not
/// depend on which other counties are present.
CountySample sample_per_county(std::span<const ImageRecord> records, std::size_t m,
                               std::uint64_t seed);

/// Restricts `records` to those whose county is in `counties`.
std::vector<ImageRecord> records_in_counties(std::span<const ImageRecord> records,
                                             std::span<const FipsCode> counties);

/// Tags present in at least `min_county_support` distinct counties. Machine
/// tags are taken as-is, so confidence filtering must already have happened.
/// Throws DataError when nothing survives.
TagVocabulary build_vocabulary(std::span<const ImageRecord> records, TagSource source,
                               std::size_t min_county_support = 10);

struct CountyTagMatrix {
    std::vector<FipsCode> counties;
    TagVocabulary vocabulary;
    Eigen::MatrixXd values;  // counties x vocabulary
    bool normalized = false;
    std::size_t skipped_records = 0;  // records outside the county list
};

/// Entry (c, t) counts images in county c carrying tag t at least once.
CountyTagMatrix build_count_matrix(std::span<const ImageRecord> records, const TagVocabulary& vocab,
                                   std::span<const FipsCode> counties, TagSource source);

/// Divides each nonzero row by its Euclidean norm; zero rows stay zero.
Eigen::MatrixXd normalize_rows_l2(const Eigen::MatrixXd& m);
CountyTagMatrix normalize_rows_l2(CountyTagMatrix m);

/// A block of named feature columns aligned to a county row order.
struct FeatureBlock {
    Block kind = Block::U;
    std::vector<FipsCode> counties;
    std::vector<std::string> columns;
    Eigen::MatrixXd values;
    bool normalized = false;
};

FeatureBlock to_block(const CountyTagMatrix& m, Block kind);

/// Z-scores every column over `counties` (sample standard deviation). Constant
/// columns become zero. Throws DataError if a county has no demographics.
FeatureBlock standardize_demographics(const DemographicsTable& table,
                                      std::span<const FipsCode> counties);

struct ColumnInfo {
    Block block;
    std::string name;
};

struct DesignMatrix {
    std::vector<FipsCode> counties;
    Eigen::MatrixXd values;
    std::vector<ColumnInfo> columns;
    std::vector<std::pair<Block, std::pair<std::size_t, std::size_t>>> block_ranges;  // [begin, end)
};

/// Concatenates the requested blocks in U, I, D order. Every requested block
/// must be supplied and share the same county order (DataError otherwise).
DesignMatrix combine_blocks(FeatureSet set, const FeatureBlock* u, const FeatureBlock* i,
                            const FeatureBlock* d);

/// Dump format: one JSON header line {kind, counties, columns, normalized},
/// then one CSV row per county: fips,v1,...,vK.
void write_block(const std::filesystem::path& path, const FeatureBlock& block);
FeatureBlock read_block(const std::filesystem::path& path);

}  // namespace healthtags
