#include "healthtags/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "healthtags/csv.hpp"
#include "healthtags/error.hpp"

namespace healthtags {

using nlohmann::json;

std::string_view block_name(Block block) noexcept {
    switch (block) {
        case Block::U: return "U";
        case Block::I: return "I";
        case Block::D: return "D";
    }
    return "?";
}

FeatureSet FeatureSet::parse(std::string_view text) {
    unsigned mask = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto plus = text.find('+', start);
        auto part = text.substr(start, plus == std::string_view::npos ? text.npos : plus - start);
        if (part == "U") mask |= 1U << static_cast<int>(Block::U);
        else if (part == "I") mask |= 1U << static_cast<int>(Block::I);
        else if (part == "D") mask |= 1U << static_cast<int>(Block::D);
        else throw ConfigError("unknown feature set '" + std::string(text) + "'");
        if (plus == std::string_view::npos) break;
        start = plus + 1;
    }
    return FeatureSet(mask);
}

FeatureSet FeatureSet::of(std::initializer_list<Block> blocks) {
    unsigned mask = 0;
    for (auto b : blocks) mask |= 1U << static_cast<int>(b);
    if (mask == 0) throw ConfigError("feature set must contain at least one block");
    return FeatureSet(mask);
}

const std::array<FeatureSet, 6>& FeatureSet::table_order() {
    static const std::array<FeatureSet, 6> order = {
        of({Block::U}),           of({Block::I}),           of({Block::D}),
        of({Block::U, Block::D}), of({Block::I, Block::D}), of({Block::U, Block::I, Block::D}),
    };
    return order;
}

std::string FeatureSet::name() const {
    std::string out;
    for (auto b : {Block::U, Block::I, Block::D}) {
        if (!contains(b)) continue;
        if (!out.empty()) out += '+';
        out += block_name(b);
    }
    return out;
}

std::optional<std::size_t> TagVocabulary::column(std::string_view tag) const {
    auto it = index.find(tag);
    if (it == index.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------

std::vector<FipsCode> select_top_counties(std::span<const ImageRecord> records, std::size_t n) {
    std::map<FipsCode, std::size_t> counts;
    for (const auto& r : records)
        if (r.fips) ++counts[*r.fips];
    if (counts.size() < n)
        throw DataError("need " + std::to_string(n) + " counties but only " +
                        std::to_string(counts.size()) + " have images (short by " +
                        std::to_string(n - counts.size()) + ")");

    std::vector<std::pair<FipsCode, std::size_t>> ranked(counts.begin(), counts.end());
    // std::map iteration is already FIPS-ascending, so a stable sort on count
    // keeps the smaller FIPS first among ties.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<FipsCode> top;
    for (std::size_t i = 0; i < n; ++i) top.push_back(ranked[i].first);
    std::sort(top.begin(), top.end());
    return top;
}

CountySample sample_per_county(std::span<const ImageRecord> records, std::size_t m,
                               std::uint64_t seed) {
    std::map<FipsCode, std::vector<std::size_t>> by_county;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].fips) by_county[*records[i].fips].push_back(i);

    CountySample sample;
    for (auto& [fips, idx] : by_county) {
        if (idx.size() < m) sample.shortfalls.emplace_back(fips, idx.size());
        if (idx.size() > m) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(fips.value())};
            std::mt19937_64 rng(seq);
            for (std::size_t k = 0; k < m; ++k) {
                std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
                std::swap(idx[k], idx[pick(rng)]);
            }
            idx.resize(m);
            std::sort(idx.begin(), idx.end());
        }
        for (auto i : idx) sample.records.push_back(records[i]);
    }
    return sample;
}

std::vector<ImageRecord> records_in_counties(std::span<const ImageRecord> records,
                                             std::span<const FipsCode> counties) {
    std::set<FipsCode> wanted(counties.begin(), counties.end());
    std::vector<ImageRecord> out;
    for (const auto& r : records)
        if (r.fips && wanted.count(*r.fips)) out.push_back(r);
    return out;
}

namespace {

// Distinct tags of one image for the given source.
std::vector<std::string_view> image_tags(const ImageRecord& r, TagSource source) {
    std::vector<std::string_view> tags;
    if (source == TagSource::user) {
        tags.assign(r.user_tags.begin(), r.user_tags.end());
    } else if (r.machine_tags) {
        for (const auto& t : *r.machine_tags) tags.push_back(t.tag);
    }
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    return tags;
}

}  // namespace

TagVocabulary build_vocabulary(std::span<const ImageRecord> records, TagSource source,
                               std::size_t min_county_support) {
    std::map<std::string, std::set<FipsCode>, std::less<>> counties_of;
    for (const auto& r : records) {
        if (!r.fips) continue;
        for (auto tag : image_tags(r, source)) {
            auto it = counties_of.find(tag);
            if (it == counties_of.end()) it = counties_of.emplace(std::string(tag), std::set<FipsCode>{}).first;
            it->second.insert(*r.fips);
        }
    }
    TagVocabulary vocab;
    for (const auto& [tag, counties] : counties_of) {
        if (counties.size() < min_county_support) continue;
        vocab.index.emplace(tag, vocab.tags.size());
        vocab.tags.push_back(tag);
        vocab.support.push_back(counties.size());
    }
    if (vocab.tags.empty())
        throw DataError(std::string("no ") + (source == TagSource::user ? "user" : "machine") +
                        " tag appears in at least " + std::to_string(min_county_support) +
                        " counties; no usable features");
    return vocab;
}

CountyTagMatrix build_count_matrix(std::span<const ImageRecord> records, const TagVocabulary& vocab,
                                   std::span<const FipsCode> counties, TagSource source) {
    CountyTagMatrix m;
    m.counties.assign(counties.begin(), counties.end());
    m.vocabulary = vocab;
    m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(counties.size()),
                                     static_cast<Eigen::Index>(vocab.size()));
    std::map<FipsCode, Eigen::Index> row_of;
    for (std::size_t i = 0; i < counties.size(); ++i) row_of.emplace(counties[i], static_cast<Eigen::Index>(i));

    for (const auto& r : records) {
        auto row = r.fips ? row_of.find(*r.fips) : row_of.end();
        if (row == row_of.end()) {
            ++m.skipped_records;
            continue;
        }
        for (auto tag : image_tags(r, source))
            if (auto col = vocab.column(tag)) m.values(row->second, static_cast<Eigen::Index>(*col)) += 1.0;
    }
    return m;
}

Eigen::MatrixXd normalize_rows_l2(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double norm = out.row(r).norm();
        if (norm > 0.0) out.row(r) /= norm;
    }
    return out;
}

CountyTagMatrix normalize_rows_l2(CountyTagMatrix m) {
    m.values = normalize_rows_l2(m.values);
    m.normalized = true;
    return m;
}

FeatureBlock to_block(const CountyTagMatrix& m, Block kind) {
    return {kind, m.counties, m.vocabulary.tags, m.values, m.normalized};
}

FeatureBlock standardize_demographics(const DemographicsTable& table,
                                      std::span<const FipsCode> counties) {
    FeatureBlock block;
    block.kind = Block::D;
    block.counties.assign(counties.begin(), counties.end());
    block.columns = table.columns;
    const auto n = static_cast<Eigen::Index>(counties.size());
    const auto k = static_cast<Eigen::Index>(table.columns.size());
    block.values.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.row(counties[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < k; ++j) block.values(i, j) = row[static_cast<std::size_t>(j)];
    }
    if (n < 2) throw DataError("standardizing demographics needs at least 2 counties");
    for (Eigen::Index j = 0; j < k; ++j) {
        auto col = block.values.col(j);
        const double mean = col.mean();
        col.array() -= mean;
        const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n - 1));
        if (sd <= 1e-12 * std::max(std::abs(mean), 1.0))
            col.setZero();
        else
            col /= sd;
    }
    block.normalized = true;
    return block;
}

DesignMatrix combine_blocks(FeatureSet set, const FeatureBlock* u, const FeatureBlock* i,
                            const FeatureBlock* d) {
    std::vector<const FeatureBlock*> parts;
    for (auto [kind, ptr] : {std::pair{Block::U, u}, std::pair{Block::I, i}, std::pair{Block::D, d}}) {
        if (!set.contains(kind)) continue;
        if (!ptr) throw DataError("feature set " + set.name() + " needs block " + std::string(block_name(kind)));
        parts.push_back(ptr);
    }
    DesignMatrix out;
    out.counties = parts.front()->counties;
    Eigen::Index width = 0;
    for (const auto* p : parts) {
        if (p->counties != out.counties)
            throw DataError("block " + std::string(block_name(p->kind)) +
                            " has a different county order than block " +
                            std::string(block_name(parts.front()->kind)));
        if (p->values.rows() != static_cast<Eigen::Index>(p->counties.size()) ||
            p->values.cols() != static_cast<Eigen::Index>(p->columns.size()))
            throw DataError("block " + std::string(block_name(p->kind)) + " has inconsistent dimensions");
        width += p->values.cols();
    }
    out.values.resize(static_cast<Eigen::Index>(out.counties.size()), width);
    Eigen::Index at = 0;
    for (const auto* p : parts) {
        out.values.middleCols(at, p->values.cols()) = p->values;
        const auto begin = static_cast<std::size_t>(at);
        for (const auto& c : p->columns) out.columns.push_back({p->kind, c});
        at += p->values.cols();
        out.block_ranges.push_back({p->kind, {begin, static_cast<std::size_t>(at)}});
    }
    return out;
}

// ---------------------------------------------------------------------------

void write_block(const std::filesystem::path& path, const FeatureBlock& block) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    std::vector<std::string> counties;
    for (const auto& c : block.counties) counties.push_back(c.str());
    json header{{"kind", block_name(block.kind)},
                {"counties", counties},
                {"columns", block.columns},
                {"normalized", block.normalized}};
    out << header.dump() << '\n';
    fmt::memory_buffer buf;
    for (Eigen::Index r = 0; r < block.values.rows(); ++r) {
        buf.clear();
        fmt::format_to(std::back_inserter(buf), "{}", block.counties[static_cast<std::size_t>(r)].str());
        for (Eigen::Index c = 0; c < block.values.cols(); ++c)
            fmt::format_to(std::back_inserter(buf), ",{}", block.values(r, c));
        buf.push_back('\n');
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
}

FeatureBlock read_block(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open matrix dump " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty matrix dump");
    json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.is_object())
        throw DataError(path.string() + ": malformed matrix header");

    FeatureBlock block;
    try {
        const auto kind = header.at("kind").get<std::string>();
        if (kind == "U") block.kind = Block::U;
        else if (kind == "I") block.kind = Block::I;
        else if (kind == "D") block.kind = Block::D;
        else throw DataError(path.string() + ": unknown block kind " + kind);
        for (const auto& c : header.at("counties")) block.counties.push_back(FipsCode::parse(c.get<std::string>()));
        block.columns = header.at("columns").get<std::vector<std::string>>();
        block.normalized = header.at("normalized").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed matrix header: " + e.what());
    }

    const auto rows = static_cast<Eigen::Index>(block.counties.size());
    const auto cols = static_cast<Eigen::Index>(block.columns.size());
    block.values.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw DataError(path.string() + ": missing matrix rows");
        auto fields = split_csv_line(line);
        if (static_cast<Eigen::Index>(fields.size()) != cols + 1 ||
            fields[0] != block.counties[static_cast<std::size_t>(r)].str())
            throw DataError(path.string() + ": row " + std::to_string(r + 1) + " does not match header");
        for (Eigen::Index c = 0; c < cols; ++c) {
            auto v = parse_double(fields[static_cast<std::size_t>(c + 1)]);
            if (!v) throw DataError(path.string() + ": non-numeric matrix entry");
            block.values(r, c) = *v;
        }
    }
    return block;
}

}  // namespace healthtags
