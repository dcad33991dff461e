#include "healthtags/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "healthtags/csv.hpp"
#include "healthtags/error.hpp"
#include "healthtags/geo.hpp"
#include "healthtags/model.hpp"
#include "healthtags/report.hpp"
#include "healthtags/tagging.hpp"

namespace healthtags {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCredentialsEnv = "HEALTHTAGS_TAGGER_CREDENTIALS";

// ---------------------------------------------------------------------------
// Config parsing helpers
// ---------------------------------------------------------------------------

class Section {
public:
    Section(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError(fmt::format("'{}' must be an object", label()));
    }

    void allow_only(std::initializer_list<std::string_view> keys) const {
        for (const auto& [key, value] : obj_.items()) {
            (void)value;
            if (std::find(keys.begin(), keys.end(), key) == keys.end())
                throw ConfigError(fmt::format("unknown config key '{}'", path(key)));
        }
    }

    bool has(std::string_view key) const { return obj_.contains(std::string(key)); }
    std::string path(std::string_view key) const {
        return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key);
    }
    const json& at(std::string_view key) const { return obj_.at(std::string(key)); }

    template <typename T>
    void read(std::string_view key, T& out) const {
        if (!has(key)) return;
        const json& v = at(key);
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t> ||
                          std::is_same_v<T, int>) {
                if (!v.is_number_integer()) throw ConfigError("");
                if constexpr (!std::is_same_v<T, int>)
                    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
                        throw ConfigError("");
                out = v.get<T>();
            } else if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
                out = v.get<double>();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
                out = v.get<bool>();
            } else {
                if (!v.is_string()) throw ConfigError("");
                out = v.get<std::string>();
            }
        } catch (const ConfigError&) {
            throw ConfigError(fmt::format("config key '{}' has the wrong type", path(key)));
        }
    }

    void read_path(std::string_view key, fs::path& out, const fs::path& base) const {
        std::string s;
        read(key, s);
        if (has(key)) out = s.empty() ? fs::path{} : resolve(s, base);
    }
    void read_path(std::string_view key, std::optional<fs::path>& out, const fs::path& base) const {
        std::string s;
        read(key, s);
        if (has(key) && !s.empty()) out = resolve(s, base);
    }

    static fs::path resolve(const std::string& s, const fs::path& base) {
        fs::path p(s);
        return p.is_absolute() ? p.lexically_normal() : (base / p).lexically_normal();
    }

private:
    std::string label() const { return prefix_.empty() ? "config" : prefix_; }
    const json& obj_;
    std::string prefix_;
};

json parse_json_document(std::string_view text, const char* what) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(fmt::format("{} is not valid JSON", what));
    return doc;
}

std::string read_text(const fs::path& path, bool config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        const auto msg = "cannot read " + path.string();
        if (config) throw ConfigError(msg);
        throw DataError(msg);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string path_text(const fs::path& p, const fs::path& relative_to) {
    if (p.empty()) return "";
    if (relative_to.empty()) return p.generic_string();
    auto rel = p.lexically_relative(relative_to);
    return rel.empty() ? p.generic_string() : rel.generic_string();
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

struct StageContext {
    const PipelineConfig& config;
    const StageOptions& options;
    StageOutcome outcome;

    fs::path out(std::string_view name) const { return config.output_dir / name; }

    template <typename... Args>
    void log(fmt::format_string<Args...> f, Args&&... args) const {
        if (options.quiet) return;
        fmt::print(stderr, "[{}] ", stage_name(outcome.stage));
        fmt::print(stderr, f, std::forward<Args>(args)...);
        fmt::print(stderr, "\n");
    }
    void warn(std::string message) {
        if (!options.quiet) fmt::print(stderr, "[{}] warning: {}\n", stage_name(outcome.stage), message);
        outcome.warnings.push_back(std::move(message));
    }
    void produced(const fs::path& p) { outcome.artifacts.push_back(p); }
};

fs::path require_file(const fs::path& p, std::string_view what) {
    if (p.empty()) throw ConfigError(fmt::format("config key '{}' is required for this stage", what));
    if (!fs::exists(p)) throw DataError(fmt::format("{} not found: {}", what, p.string()));
    return p;
}

fs::path require_artifact(const PipelineConfig& c, std::string_view name, std::string_view producer) {
    auto p = c.output_dir / name;
    if (!fs::exists(p))
        throw DataError(fmt::format("{} is missing; run the '{}' stage first", p.string(), producer));
    return p;
}

std::vector<ImageRecord> read_artifact_images(const fs::path& path) {
    auto load = read_images(path);
    if (!load.issues.empty())
        throw DataError(fmt::format("{}:{}: {}", path.string(), load.issues.front().line,
                                    load.issues.front().message));
    return std::move(load.records);
}

std::vector<FipsCode> read_county_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<FipsCode> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(FipsCode::parse(line));
    return out;
}

std::vector<fs::path> stage_inputs(Stage stage, const PipelineConfig& c) {
    std::vector<fs::path> in;
    auto opt = [&](const fs::path& p) {
        if (!p.empty() && fs::exists(p)) in.push_back(p);
    };
    auto out = [&](std::string_view n) { opt(c.output_dir / n); };
    switch (stage) {
        case Stage::ingest: opt(c.images); opt(c.health); opt(c.demographics); break;
        case Stage::geotag:
            out("ingested.jsonl");
            if (c.geo.backend == "offline") opt(c.geo.fixture);
            break;
        case Stage::tag:
            out("geotagged.jsonl");
            if (c.tagger.backend == "fixture") opt(c.tagger.fixture);
            break;
        case Stage::featurize: out("tagged.jsonl"); out("selected_counties.txt"); opt(c.demographics); break;
        case Stage::evaluate: out("U.matrix"); out("I.matrix"); out("D.matrix"); opt(c.health); break;
        case Stage::sweep: out("tagged.jsonl"); out("selected_counties.txt"); opt(c.health); break;
        case Stage::report:
            out("results.csv"); out("predictions.csv");
            out("U.matrix"); out("I.matrix"); out("D.matrix");
            opt(c.health);
            if (c.county_names) opt(*c.county_names);
            break;
    }
    return in;
}

std::string stage_input_hash(Stage stage, const PipelineConfig& c) {
    std::string material(stage_name(stage));
    material += '\n';
    material += c.canonical_json();
    for (const auto& p : stage_inputs(stage, c)) material += "\n" + p.generic_string() + "=" + file_hash(p);
    return fnv1a_hex(material);
}

fs::path stamp_path(const PipelineConfig& c, Stage stage) {
    return c.output_dir / ".stamps" / (std::string(stage_name(stage)) + ".json");
}

// Returns the recorded artifacts when the stamp matches the current inputs and
// every recorded output still has its recorded hash.
std::optional<std::vector<fs::path>> reusable(Stage stage, const PipelineConfig& c, const std::string& input_hash) {
    const auto path = stamp_path(c, stage);
    if (!fs::exists(path)) return std::nullopt;
    json doc = json::parse(read_text(path, false), nullptr, false);
    if (doc.is_discarded() || doc.value("input_hash", "") != input_hash) return std::nullopt;
    std::vector<fs::path> artifacts;
    for (const auto& [name, hash] : doc.at("outputs").items()) {
        const auto p = c.output_dir / name;
        if (!fs::exists(p) || file_hash(p) != hash.get<std::string>()) return std::nullopt;
        artifacts.push_back(p);
    }
    return artifacts;
}

json assumptions(const PipelineConfig& c) {
    return json{
        {"smape_variant", "mean |F-A| / ((|A|+|F|)/2) in percent, range [0,200], 0/0 terms = 0"},
        {"paired_test", std::string(paired_test_name(c.paired_test)) +
                            " (stars); both dependent and independent reported in comparisons.csv"},
        {"demographic_scaling", "z-score over selected counties, sample sd, constant columns -> 0"},
        {"tag_block_normalization", "L2 per county row, each tag block normalized separately"},
        {"confidence_filter", "strictly greater than threshold, per image, before vocabulary support"},
        {"cv_metrics", "pooled out-of-fold predictions"},
        {"folds", "seeded random, unstratified, shared by all feature sets"},
        {"ridge_intercept", "unpenalized, via centering"},
        {"feature_ci", "Fisher z 95% interval"},
        {"unresolved_points", "flagged unresolvable and excluded"},
    };
}

void finish_stage(StageContext& ctx, const std::string& input_hash) {
    const auto& c = ctx.config;
    // Same order as a reused stage reports (stamp keys are sorted).
    std::sort(ctx.outcome.artifacts.begin(), ctx.outcome.artifacts.end(), [&](const fs::path& a, const fs::path& b) {
        return a.lexically_relative(c.output_dir).generic_string() < b.lexically_relative(c.output_dir).generic_string();
    });
    json outputs = json::object();
    for (const auto& p : ctx.outcome.artifacts)
        outputs[p.lexically_relative(c.output_dir).generic_string()] = file_hash(p);

    if (ctx.outcome.exit_code == 0) {
        fs::create_directories(stamp_path(c, ctx.outcome.stage).parent_path());
        write_text(stamp_path(c, ctx.outcome.stage),
                   json{{"input_hash", input_hash}, {"outputs", outputs}}.dump(2) + "\n");
    }

    const auto meta_path = c.output_dir / "run_metadata.json";
    json meta = json::object();
    if (fs::exists(meta_path)) {
        meta = json::parse(read_text(meta_path, false), nullptr, false);
        if (meta.is_discarded() || !meta.is_object()) meta = json::object();
    }
    meta["config_hash"] = fnv1a_hex(c.canonical_json());
    meta["seed"] = c.seed;
    meta["assumptions"] = assumptions(c);
    meta["stages"][std::string(stage_name(ctx.outcome.stage))] = {
        {"input_hash", input_hash}, {"outputs", outputs}, {"exit_code", ctx.outcome.exit_code},
        {"warnings", ctx.outcome.warnings}};
    write_text(meta_path, meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_ingest(StageContext& ctx) {
    const auto& c = ctx.config;
    auto load = read_images(require_file(c.images, "inputs.images"));
    auto manifest = summarize_images(load.records, load.issues.size());
    manifest.rows_per_source["images"] = load.lines_read;
    if (!c.health.empty()) {
        auto health = read_health_csv(require_file(c.health, "inputs.health"));
        manifest.rows_per_source["health"] = health.size();
    }
    if (!c.demographics.empty()) {
        auto demo = read_demographics_csv(require_file(c.demographics, "inputs.demographics"));
        manifest.rows_per_source["demographics"] = demo.rows.size();
    }
    write_images(ctx.out("ingested.jsonl"), load.records);
    write_issue_report(ctx.out("ingest_errors.jsonl"), load.issues);
    write_text(ctx.out("manifest.json"), manifest_json(manifest) + "\n");
    for (auto n : {"ingested.jsonl", "ingest_errors.jsonl", "manifest.json"}) ctx.produced(ctx.out(n));
    if (!load.issues.empty())
        ctx.warn(fmt::format("{} line(s) quarantined to ingest_errors.jsonl", load.issues.size()));
    ctx.log("{} images, {} with user tags, {} with machine tags", manifest.images, manifest.with_user_tags,
            manifest.with_machine_tags);
}

void stage_geotag(StageContext& ctx) {
    const auto& c = ctx.config;
    auto records = read_artifact_images(require_artifact(c, "ingested.jsonl", "ingest"));

    std::unique_ptr<CountyBackend> backend;
    std::optional<fs::path> cache_path = c.geo.cache;
    if (c.geo.backend == "offline") {
        backend = std::make_unique<RectangleFixture>(RectangleFixture::load(require_file(c.geo.fixture, "geo.fixture")));
    } else {
        RemoteGeoOptions opts;
        opts.base_url = c.geo.base_url;
        opts.fips_json_path = c.geo.fips_path;
        opts.retry = {c.geo.retry_attempts, std::chrono::milliseconds(c.geo.initial_backoff_ms)};
        opts.queries_per_second = c.geo.queries_per_second;
        backend = std::make_unique<RemoteGeocoder>(opts);
        if (!cache_path) cache_path = ctx.out("geo_cache.jsonl");
    }
    std::optional<GeoCache> cache;
    if (cache_path) cache.emplace(GeoCache::open(*cache_path));
    CountyResolver resolver(*backend, cache ? &*cache : nullptr);
    auto result = annotate_dataset(std::move(records), resolver, c.geo.max_in_flight);

    std::vector<ImageRecord> resolved;
    for (auto& r : result.records)
        if (r.fips) resolved.push_back(std::move(r));
    write_images(ctx.out("geotagged.jsonl"), resolved);

    json failures = json::array();
    for (const auto& f : result.failures) failures.push_back({{"index", f.index}, {"message", f.message}});
    json report{{"images", result.records.size()},
                {"resolved", resolved.size()},
                {"unresolvable", result.unresolvable.size()},
                {"failed", result.failures.size()},
                {"cache_hits", resolver.cache_hits()},
                {"backend_calls", resolver.backend_calls()},
                {"failures", failures}};
    write_text(ctx.out("geo_report.json"), report.dump(2) + "\n");
    ctx.produced(ctx.out("geotagged.jsonl"));
    ctx.produced(ctx.out("geo_report.json"));
    ctx.log("{} resolved, {} unresolvable, {} failed", resolved.size(), result.unresolvable.size(),
            result.failures.size());
    if (!result.failures.empty()) {
        ctx.warn(fmt::format("{} image(s) could not be resolved because the geocoder failed: {}",
                             result.failures.size(), result.failures.front().message));
        ctx.outcome.exit_code = 3;
    }
}

std::unique_ptr<TaggerBackend> make_tagger(const PipelineConfig& c) {
    if (c.tagger.backend == "fixture")
        return std::make_unique<FixtureTagger>(FixtureTagger::load(require_file(c.tagger.fixture, "tagger.fixture")));
    RemoteTaggerOptions opts;
    opts.base_url = c.tagger.base_url;
    opts.image_url_template = c.tagger.image_url_template;
    opts.retry = {c.tagger.retry_attempts, std::chrono::milliseconds(c.tagger.initial_backoff_ms)};
    opts.queries_per_second = c.tagger.queries_per_second;
    std::optional<fs::path> creds = c.tagger.credentials;
    if (const char* env = std::getenv(kCredentialsEnv); env && *env) creds = fs::path(env);
    if (!creds)
        throw ConfigError(fmt::format("remote tagger needs credentials: set tagger.credentials or {}",
                                      kCredentialsEnv));
    if (!fs::exists(*creds)) throw ConfigError("tagger credentials file not found: " + creds->string());
    std::tie(opts.api_key, opts.api_secret) = read_tagger_credentials(*creds);
    return std::make_unique<RemoteTagger>(opts);
}

void stage_tag(StageContext& ctx) {
    const auto& c = ctx.config;
    auto records = read_artifact_images(require_artifact(c, "geotagged.jsonl", "geotag"));
    const auto counties = select_top_counties(records, c.n_top_counties);
    auto sample = sample_per_county(records_in_counties(records, counties), c.images_per_county, c.seed);
    for (const auto& [fips, have] : sample.shortfalls)
        ctx.warn(fmt::format("county {} has only {} images (wanted {})", fips.str(), have, c.images_per_county));

    json report;
    std::vector<ImageRecord> out_records;
    std::vector<TaggerResponse> responses;
    if (c.tagger.backend == "none") {
        const auto untagged = std::count_if(sample.records.begin(), sample.records.end(),
                                            [](const ImageRecord& r) { return !r.machine_tags; });
        if (untagged > 0)
            ctx.warn(fmt::format("{} sampled image(s) have no machine tags and no tagger is configured", untagged));
        report = {{"backend", "none"}, {"sampled", sample.records.size()}, {"untagged", untagged}};
        out_records = std::move(sample.records);
    } else {
        auto backend = make_tagger(c);
        auto batch = tag_images(std::move(sample.records), *backend, c.tagger.max_in_flight);
        report = {{"backend", c.tagger.backend},   {"already_tagged", batch.already_tagged},
                  {"tagged", batch.tagged},        {"gone_kept", batch.gone_kept},
                  {"gone_dropped", batch.gone_dropped}, {"malformed", batch.malformed},
                  {"failed", batch.failed}};
        if (batch.malformed + batch.failed > 0)
            ctx.warn(fmt::format("{} malformed and {} failed tagger response(s); those images stay untagged",
                                 batch.malformed, batch.failed));
        out_records = std::move(batch.records);
        responses = std::move(batch.responses);
    }
    report["counties"] = counties.size();
    report["images"] = out_records.size();
    json shortfalls = json::array();
    for (const auto& [fips, have] : sample.shortfalls) shortfalls.push_back({{"fips", fips.str()}, {"images", have}});
    report["shortfalls"] = shortfalls;

    write_images(ctx.out("tagged.jsonl"), out_records);
    write_tagger_fixture(ctx.out("tagger_responses.jsonl"), responses);
    std::string county_text;
    for (const auto& f : counties) county_text += f.str() + "\n";
    write_text(ctx.out("selected_counties.txt"), county_text);
    write_text(ctx.out("tag_report.json"), report.dump(2) + "\n");
    for (auto n : {"tagged.jsonl", "tagger_responses.jsonl", "selected_counties.txt", "tag_report.json"})
        ctx.produced(ctx.out(n));
    ctx.log("{} counties, {} sampled images", counties.size(), out_records.size());
}

bool needs_block(const PipelineConfig& c, Block b) {
    return std::any_of(c.feature_sets.begin(), c.feature_sets.end(), [b](FeatureSet s) { return s.contains(b); });
}

void stage_featurize(StageContext& ctx) {
    const auto& c = ctx.config;
    const auto records = read_artifact_images(require_artifact(c, "tagged.jsonl", "tag"));
    const auto counties = read_county_list(require_artifact(c, "selected_counties.txt", "tag"));
    json report = json::object();
    report["counties"] = counties.size();

    // Stale matrices from an earlier config must not leak into evaluation.
    for (auto n : {"U.matrix", "I.matrix", "D.matrix"}) fs::remove(ctx.out(n));

    auto emit_tags = [&](Block kind, TagSource source, std::span<const ImageRecord> pool) {
        const auto name = std::string(block_name(kind));
        TagVocabulary vocab;
        try {
            vocab = build_vocabulary(pool, source, c.min_county_support);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{} block: {}", name, e.what()));
        }
        auto matrix = normalize_rows_l2(build_count_matrix(pool, vocab, counties, source));
        const auto path = ctx.out(name + ".matrix");
        write_block(path, to_block(matrix, kind));
        ctx.produced(path);
        std::size_t zero_rows = 0;
        for (Eigen::Index i = 0; i < matrix.values.rows(); ++i)
            if (matrix.values.row(i).squaredNorm() == 0.0) ++zero_rows;
        report[name] = {{"tags", vocab.size()}, {"skipped_records", matrix.skipped_records}, {"zero_rows", zero_rows}};
        if (zero_rows > 0) ctx.warn(fmt::format("{} block: {} county row(s) have no surviving tags", name, zero_rows));
        ctx.log("{} block: {} x {}", name, counties.size(), vocab.size());
    };

    if (needs_block(c, Block::U)) emit_tags(Block::U, TagSource::user, records);
    if (needs_block(c, Block::I)) {
        std::vector<ImageRecord> machine;
        for (const auto& r : records)
            if (r.machine_tags) machine.push_back(r);
        const auto filtered = filter_records_by_confidence(machine, ConfidenceThreshold(c.confidence_threshold));
        report["I_images"] = filtered.size();
        emit_tags(Block::I, TagSource::machine, filtered);
    }
    if (needs_block(c, Block::D)) {
        const auto demo = read_demographics_csv(require_file(c.demographics, "inputs.demographics"));
        const auto block = standardize_demographics(demo, counties);
        write_block(ctx.out("D.matrix"), block);
        ctx.produced(ctx.out("D.matrix"));
        report["D"] = {{"columns", block.columns.size()}};
    }
    write_text(ctx.out("featurize_report.json"), report.dump(2) + "\n");
    ctx.produced(ctx.out("featurize_report.json"));
}

struct Blocks {
    std::optional<FeatureBlock> u, i, d;

    const FeatureBlock* get(Block b) const {
        const auto& slot = b == Block::U ? u : b == Block::I ? i : d;
        return slot ? &*slot : nullptr;
    }
    const std::vector<FipsCode>& counties() const {
        for (auto b : {Block::U, Block::I, Block::D})
            if (auto p = get(b)) return p->counties;
        throw DataError("no feature matrices found; run the 'featurize' stage first");
    }
};

Blocks load_blocks(const PipelineConfig& c, bool required) {
    Blocks blocks;
    for (auto b : {Block::U, Block::I, Block::D}) {
        const auto path = c.output_dir / (std::string(block_name(b)) + ".matrix");
        if (!fs::exists(path)) {
            if (required && needs_block(c, b))
                throw DataError(fmt::format("{} is missing; run the 'featurize' stage first", path.string()));
            continue;
        }
        auto block = read_block(path);
        if (block.kind != b) throw DataError(path.string() + ": block kind does not match file name");
        (b == Block::U ? blocks.u : b == Block::I ? blocks.i : blocks.d) = std::move(block);
    }
    return blocks;
}

DesignMatrix design_for(const Blocks& blocks, FeatureSet set) {
    return combine_blocks(set, set.contains(Block::U) ? blocks.get(Block::U) : nullptr,
                          set.contains(Block::I) ? blocks.get(Block::I) : nullptr,
                          set.contains(Block::D) ? blocks.get(Block::D) : nullptr);
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

std::vector<FeatureSet> ordered(const std::vector<FeatureSet>& sets) {
    std::vector<FeatureSet> out;
    for (auto s : FeatureSet::table_order())
        if (std::find(sets.begin(), sets.end(), s) != sets.end()) out.push_back(s);
    return out;
}

std::string file_safe(std::string name) {
    std::replace(name.begin(), name.end(), '+', '_');
    return name;
}

void stage_evaluate(StageContext& ctx) {
    const auto& c = ctx.config;
    const auto blocks = load_blocks(c, true);
    const auto& counties = blocks.counties();
    const auto health = read_health_csv(require_file(c.health, "inputs.health"));
    const auto folds = kfold_split(counties.size(), c.k_folds, c.seed);
    const RidgeSpec ridge{c.alpha, true};
    const auto sets = ordered(c.feature_sets);
    const auto baseline = FeatureSet::of({Block::D});
    const bool have_baseline = std::find(sets.begin(), sets.end(), baseline) != sets.end();

    fs::create_directories(ctx.out("models"));
    std::vector<GridEntry> entries;
    std::string predictions = "statistic,feature_set,fips,actual,predicted\n";
    std::string comparisons =
        "statistic,feature_set,r,r_baseline,r12,n,z_dependent,p_dependent,z_independent,p_independent\n";

    for (auto stat : c.statistics) {
        const auto column = health.column(counties, stat);
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(column.data(), static_cast<Eigen::Index>(column.size()));
        std::map<std::string, std::pair<EvalResult, Eigen::VectorXd>> by_set;
        for (auto set : sets) {
            const auto context = fmt::format("{} / {}", stat_name(stat), set.name());
            try {
                const auto design = design_for(blocks, set);
                auto cv = cross_validate(design.values, y, ridge, folds);
                auto result = evaluate_predictions(stat, set, column, as_span(cv.pooled));
                const auto model = fit_ridge(design.values, y, ridge);
                write_text(ctx.out("models") / (std::string(stat_name(stat)) + "__" + file_safe(set.name()) + ".json"),
                           model_json(model, design.columns, c.seed) + "\n");
                for (std::size_t i = 0; i < counties.size(); ++i)
                    predictions += fmt::format("{},{},{},{},{}\n", stat_name(stat), set.name(), counties[i].str(),
                                               column[i], cv.pooled[static_cast<Eigen::Index>(i)]);
                by_set.emplace(set.name(), std::pair{result, std::move(cv.pooled)});
            } catch (const DataError& e) {
                throw DataError(context + ": " + e.what());
            }
        }
        for (auto set : sets) {
            const auto& [result, pooled] = by_set.at(set.name());
            std::optional<CorrelationComparison> vs;
            if (have_baseline && set != baseline) {
                const auto& [base_result, base_pooled] = by_set.at(baseline.name());
                try {
                    const double r12 = pearson_r(as_span(pooled), as_span(base_pooled));
                    const auto dep = compare_correlations(result.pearson_r, base_result.pearson_r, r12, result.n,
                                                          PairedTest::dependent);
                    const auto ind = compare_correlations(result.pearson_r, base_result.pearson_r, r12, result.n,
                                                          PairedTest::independent);
                    vs = c.paired_test == PairedTest::dependent ? dep : ind;
                    comparisons += fmt::format("{},{},{:.4f},{:.4f},{:.4f},{},{:.4f},{:.4e},{:.4f},{:.4e}\n",
                                               stat_name(stat), set.name(), result.pearson_r, base_result.pearson_r,
                                               r12, result.n, dep.z, dep.p, ind.z, ind.p);
                } catch (const DataError& e) {
                    ctx.warn(fmt::format("{} / {}: no significance test ({})", stat_name(stat), set.name(), e.what()));
                }
            }
            entries.push_back(make_grid_entry(result, vs));
        }
        ctx.log("{} done", stat_name(stat));
    }
    if (!have_baseline) ctx.warn("feature set D is not evaluated, so no significance stars are attached");

    auto files = emit_results_grid(entries, c.statistics, sets, ctx.out("results"));
    for (auto& w : files.warnings) ctx.warn(w);
    write_text(ctx.out("predictions.csv"), predictions);
    write_text(ctx.out("comparisons.csv"), comparisons);
    for (auto n : {"results.csv", "results.md", "predictions.csv", "comparisons.csv"}) ctx.produced(ctx.out(n));
    for (const auto& entry : fs::directory_iterator(ctx.out("models"))) ctx.produced(entry.path());
}

void stage_sweep(StageContext& ctx) {
    const auto& c = ctx.config;
    const auto records = read_artifact_images(require_artifact(c, "tagged.jsonl", "tag"));
    const auto counties = read_county_list(require_artifact(c, "selected_counties.txt", "tag"));
    const auto health = read_health_csv(require_file(c.health, "inputs.health"));

    SweepInputs in;
    for (const auto& r : records)
        if (r.machine_tags) in.machine_records.push_back(r);
    in.counties = counties;
    in.health = &health;
    in.stats = c.statistics;
    in.min_county_support = c.min_county_support;
    in.ridge = {c.alpha, true};
    in.folds = kfold_split(counties.size(), c.k_folds, c.seed);
    const auto result = sweep_confidence_threshold(in, c.sweep_thresholds);

    std::string csv = "threshold,n_tags,macro_r";
    for (auto s : c.statistics) csv += ",r_" + std::string(stat_name(s));
    csv += '\n';
    json rows = json::array();
    for (const auto& row : result.rows) {
        csv += fmt::format("{},{},{:.4f}", row.threshold, row.n_tags, row.macro_r);
        for (double r : row.r_per_stat) csv += fmt::format(",{:.4f}", r);
        csv += '\n';
        rows.push_back({{"threshold", row.threshold}, {"n_tags", row.n_tags}, {"macro_r", row.macro_r}});
    }
    write_text(ctx.out("sweep.csv"), csv);
    write_text(ctx.out("sweep.json"), json{{"chosen_threshold", result.chosen}, {"rows", rows}}.dump(2) + "\n");
    ctx.produced(ctx.out("sweep.csv"));
    ctx.produced(ctx.out("sweep.json"));
    ctx.log("chosen threshold {}", result.chosen);
}

void stage_report(StageContext& ctx) {
    const auto& c = ctx.config;
    const auto entries = read_results_csv(require_artifact(c, "results.csv", "evaluate"));
    const auto blocks = load_blocks(c, false);
    const auto& counties = blocks.counties();
    const auto health = read_health_csv(require_file(c.health, "inputs.health"));
    std::map<FipsCode, std::string> names;
    if (c.county_names) names = read_county_names(require_file(*c.county_names, "inputs.county_names"));

    // Pooled predictions keyed by (statistic, feature set).
    std::map<std::pair<std::string, std::string>, std::map<FipsCode, std::pair<double, double>>> preds;
    {
        CsvReader reader(require_artifact(c, "predictions.csv", "evaluate"));
        reader.next();
        while (auto row = reader.next()) {
            if (row->size() != 5) throw DataError(fmt::format("predictions.csv:{}: expected 5 fields", reader.line_number()));
            auto a = parse_double((*row)[3]);
            auto p = parse_double((*row)[4]);
            if (!a || !p) throw DataError(fmt::format("predictions.csv:{}: non-numeric value", reader.line_number()));
            preds[{(*row)[0], (*row)[1]}][FipsCode::parse((*row)[2])] = {*a, *p};
        }
    }

    const auto dir = ctx.out("report");
    fs::create_directories(dir);
    const auto sets = ordered(c.feature_sets);
    auto grid = emit_results_grid(entries, c.statistics, sets, dir / "results_grid");
    for (auto& w : grid.warnings) ctx.warn(w);
    ctx.produced(grid.csv);
    ctx.produced(grid.markdown);

    std::string available;
    for (auto b : {Block::U, Block::I, Block::D})
        if (blocks.get(b)) available += (available.empty() ? "" : "+") + std::string(block_name(b));
    const auto design = design_for(blocks, FeatureSet::parse(available));

    for (auto stat : c.statistics) {
        const auto key = std::string(stat_name(stat));
        const GridEntry* best = nullptr;
        for (auto set : sets)
            for (const auto& e : entries)
                if (e.stat == stat && e.set == set && (!best || e.pearson_r > best->pearson_r)) best = &e;
        if (best) {
            auto it = preds.find({key, best->set.name()});
            if (it == preds.end()) throw DataError(fmt::format("predictions.csv has no rows for {} / {}", key, best->set.name()));
            std::vector<FipsCode> fips;
            std::vector<double> actual, predicted;
            for (const auto& [f, ap] : it->second) {
                fips.push_back(f);
                actual.push_back(ap.first);
                predicted.push_back(ap.second);
            }
            const auto data = scatter_data(fips, actual, predicted, names, c.label_top);
            emit_scatter(data, dir / ("scatter_" + key + ".csv"), dir / ("scatter_" + key + ".svg"),
                         fmt::format("{} ({}, r = {:.2f})", stat_display_name(stat), best->set.name(), best->pearson_r));
            ctx.produced(dir / ("scatter_" + key + ".csv"));
            ctx.produced(dir / ("scatter_" + key + ".svg"));
        }
        const auto y = health.column(counties, stat);
        const auto ranking = feature_correlations(design, y, c.top_features);
        if (ranking.skipped_constant > 0)
            ctx.warn(fmt::format("{}: {} constant feature column(s) skipped", key, ranking.skipped_constant));
        emit_feature_chart(ranking.top, dir / ("features_" + key + ".csv"));
        ctx.produced(dir / ("features_" + key + ".csv"));
    }
    ctx.log("wrote {} files to {}", ctx.outcome.artifacts.size(), dir.string());
}

}  // namespace

// ---------------------------------------------------------------------------

PipelineConfig::PipelineConfig() {
    feature_sets.assign(FeatureSet::table_order().begin(), FeatureSet::table_order().end());
    statistics.assign(kAllHealthStats.begin(), kAllHealthStats.end());
    for (int t = 5; t <= 60; t += 5) sweep_thresholds.push_back(t);
}

void PipelineConfig::validate() const {
    auto fail = [](std::string_view key, std::string_view why) {
        throw ConfigError(fmt::format("config key '{}' {}", key, why));
    };
    if (n_top_counties < 1) fail("n_top_counties", "must be at least 1");
    if (images_per_county < 1) fail("images_per_county", "must be at least 1");
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 100.0))
        fail("confidence_threshold", "must lie in [0, 100]");
    if (min_county_support < 1) fail("min_county_support", "must be at least 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha", "must be a finite number >= 0");
    if (k_folds < 2) fail("k_folds", "must be at least 2");
    if (k_folds > n_top_counties) fail("k_folds", "must not exceed n_top_counties");
    if (feature_sets.empty()) fail("feature_sets", "must not be empty");
    if (statistics.empty()) fail("statistics", "must not be empty");
    for (double t : sweep_thresholds)
        if (!(t >= 0.0 && t <= 100.0)) fail("sweep_thresholds", "values must lie in [0, 100]");
    if (geo.backend != "offline" && geo.backend != "remote") fail("geo.backend", "must be 'offline' or 'remote'");
    if (geo.backend == "remote" && geo.base_url.empty()) fail("geo.base_url", "is required for the remote backend");
    if (tagger.backend != "none" && tagger.backend != "fixture" && tagger.backend != "remote")
        fail("tagger.backend", "must be 'none', 'fixture' or 'remote'");
    if (tagger.backend == "remote" && tagger.base_url.empty()) fail("tagger.base_url", "is required for the remote backend");
    if (tagger.backend == "fixture" && tagger.fixture.empty()) fail("tagger.fixture", "is required for the fixture backend");
    for (auto [key, v] : {std::pair{"geo.max_in_flight", geo.max_in_flight}, {"tagger.max_in_flight", tagger.max_in_flight}})
        if (v < 1) fail(key, "must be at least 1");
    for (auto [key, v] : {std::pair{"geo.retry_attempts", geo.retry_attempts}, {"tagger.retry_attempts", tagger.retry_attempts}})
        if (v < 1) fail(key, "must be at least 1");
    if (geo.initial_backoff_ms < 0 || tagger.initial_backoff_ms < 0) fail("initial_backoff_ms", "must be >= 0");
    if (output_dir.empty()) fail("output_dir", "must not be empty");
}

std::string PipelineConfig::canonical_json() const {
    json sets = json::array(), stats = json::array();
    for (auto s : feature_sets) sets.push_back(s.name());
    for (auto s : statistics) stats.push_back(std::string(stat_name(s)));
    json doc{
        {"inputs", {{"images", images.generic_string()}, {"health", health.generic_string()},
                    {"demographics", demographics.generic_string()},
                    {"county_names", county_names ? county_names->generic_string() : ""}}},
        {"geo", {{"backend", geo.backend}, {"fixture", geo.fixture.generic_string()}, {"base_url", geo.base_url},
                 {"fips_path", geo.fips_path}, {"cache", geo.cache ? geo.cache->generic_string() : ""},
                 {"max_in_flight", geo.max_in_flight}, {"qps", geo.queries_per_second},
                 {"retry_attempts", geo.retry_attempts}, {"initial_backoff_ms", geo.initial_backoff_ms}}},
        {"tagger", {{"backend", tagger.backend}, {"fixture", tagger.fixture.generic_string()},
                    {"base_url", tagger.base_url},
                    {"credentials", tagger.credentials ? tagger.credentials->generic_string() : ""},
                    {"image_url_template", tagger.image_url_template}, {"max_in_flight", tagger.max_in_flight},
                    {"qps", tagger.queries_per_second}, {"retry_attempts", tagger.retry_attempts},
                    {"initial_backoff_ms", tagger.initial_backoff_ms}}},
        {"n_top_counties", n_top_counties},
        {"images_per_county", images_per_county},
        {"confidence_threshold", confidence_threshold},
        {"min_county_support", min_county_support},
        {"alpha", alpha},
        {"k_folds", k_folds},
        {"seed", seed},
        {"feature_sets", sets},
        {"statistics", stats},
        {"sweep_thresholds", sweep_thresholds},
        {"paired_test", std::string(paired_test_name(paired_test))},
        {"label_top", label_top},
        {"top_features", top_features},
        {"output_dir", output_dir.generic_string()},
    };
    return doc.dump();
}

PipelineConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
    const json doc = parse_json_document(json_text, "config");
    Section top(doc, "");
    top.allow_only({"inputs", "geo", "tagger", "n_top_counties", "images_per_county", "confidence_threshold",
                    "min_county_support", "alpha", "k_folds", "seed", "feature_sets", "statistics",
                    "sweep_thresholds", "paired_test", "label_top", "top_features", "output_dir", "synth"});
    for (auto key : kRequiredConfigKeys)
        if (!top.has(key)) throw ConfigError(fmt::format("missing required config key '{}'", key));

    PipelineConfig c;
    if (top.has("inputs")) {
        Section s(top.at("inputs"), "inputs");
        s.allow_only({"images", "health", "demographics", "county_names"});
        s.read_path("images", c.images, base_dir);
        s.read_path("health", c.health, base_dir);
        s.read_path("demographics", c.demographics, base_dir);
        s.read_path("county_names", c.county_names, base_dir);
    }
    if (top.has("geo")) {
        Section s(top.at("geo"), "geo");
        s.allow_only({"backend", "fixture", "base_url", "fips_path", "cache", "max_in_flight", "qps",
                      "retry_attempts", "initial_backoff_ms"});
        s.read("backend", c.geo.backend);
        s.read_path("fixture", c.geo.fixture, base_dir);
        s.read("base_url", c.geo.base_url);
        s.read("fips_path", c.geo.fips_path);
        s.read_path("cache", c.geo.cache, base_dir);
        s.read("max_in_flight", c.geo.max_in_flight);
        s.read("qps", c.geo.queries_per_second);
        s.read("retry_attempts", c.geo.retry_attempts);
        s.read("initial_backoff_ms", c.geo.initial_backoff_ms);
    }
    if (top.has("tagger")) {
        Section s(top.at("tagger"), "tagger");
        s.allow_only({"backend", "fixture", "base_url", "credentials", "image_url_template", "max_in_flight", "qps",
                      "retry_attempts", "initial_backoff_ms"});
        s.read("backend", c.tagger.backend);
        s.read_path("fixture", c.tagger.fixture, base_dir);
        s.read("base_url", c.tagger.base_url);
        s.read_path("credentials", c.tagger.credentials, base_dir);
        s.read("image_url_template", c.tagger.image_url_template);
        s.read("max_in_flight", c.tagger.max_in_flight);
        s.read("qps", c.tagger.queries_per_second);
        s.read("retry_attempts", c.tagger.retry_attempts);
        s.read("initial_backoff_ms", c.tagger.initial_backoff_ms);
    }
    top.read("n_top_counties", c.n_top_counties);
    top.read("images_per_county", c.images_per_county);
    top.read("confidence_threshold", c.confidence_threshold);
    top.read("min_county_support", c.min_county_support);
    top.read("alpha", c.alpha);
    top.read("k_folds", c.k_folds);
    top.read("seed", c.seed);
    top.read("label_top", c.label_top);
    top.read("top_features", c.top_features);

    auto string_list = [&](std::string_view key) {
        const json& v = top.at(key);
        if (!v.is_array()) throw ConfigError(fmt::format("config key '{}' must be an array", key));
        std::vector<std::string> out;
        for (const auto& item : v) {
            if (!item.is_string()) throw ConfigError(fmt::format("config key '{}' must hold strings", key));
            out.push_back(item.get<std::string>());
        }
        return out;
    };
    if (top.has("feature_sets")) {
        c.feature_sets.clear();
        for (const auto& name : string_list("feature_sets")) {
            try {
                auto set = FeatureSet::parse(name);
                if (std::find(c.feature_sets.begin(), c.feature_sets.end(), set) == c.feature_sets.end())
                    c.feature_sets.push_back(set);
            } catch (const ConfigError& e) {
                throw ConfigError(fmt::format("config key 'feature_sets': {}", e.what()));
            }
        }
    }
    if (top.has("statistics")) {
        c.statistics.clear();
        for (const auto& name : string_list("statistics")) {
            auto stat = parse_stat(name);
            if (!stat) throw ConfigError(fmt::format("config key 'statistics': unknown statistic '{}'", name));
            if (std::find(c.statistics.begin(), c.statistics.end(), *stat) == c.statistics.end())
                c.statistics.push_back(*stat);
        }
        std::vector<HealthStat> canonical;
        for (auto s : kAllHealthStats)
            if (std::find(c.statistics.begin(), c.statistics.end(), s) != c.statistics.end()) canonical.push_back(s);
        c.statistics = canonical;
    }
    if (top.has("sweep_thresholds")) {
        const json& v = top.at("sweep_thresholds");
        if (!v.is_array()) throw ConfigError("config key 'sweep_thresholds' must be an array");
        c.sweep_thresholds.clear();
        for (const auto& item : v) {
            if (!item.is_number()) throw ConfigError("config key 'sweep_thresholds' must hold numbers");
            c.sweep_thresholds.push_back(item.get<double>());
        }
    }
    if (top.has("paired_test")) {
        std::string name;
        top.read("paired_test", name);
        auto t = parse_paired_test(name);
        if (!t) throw ConfigError("config key 'paired_test' must be 'dependent' or 'independent'");
        c.paired_test = *t;
    }
    std::string out = "out";
    top.read("output_dir", out);
    c.output_dir = Section::resolve(out, base_dir);
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    const auto base = fs::absolute(path).parent_path();
    return parse_config(read_text(path, true), base);
}

std::string config_json(const PipelineConfig& c, const fs::path& relative_to) {
    json sets = json::array(), stats = json::array();
    for (auto s : c.feature_sets) sets.push_back(s.name());
    for (auto s : c.statistics) stats.push_back(std::string(stat_name(s)));
    auto rel = [&](const fs::path& p) { return path_text(p, relative_to); };
    json inputs{{"images", rel(c.images)}, {"health", rel(c.health)}, {"demographics", rel(c.demographics)}};
    if (c.county_names) inputs["county_names"] = rel(*c.county_names);
    json geo{{"backend", c.geo.backend}, {"fixture", rel(c.geo.fixture)}, {"max_in_flight", c.geo.max_in_flight},
             {"qps", c.geo.queries_per_second}};
    if (!c.geo.base_url.empty()) geo["base_url"] = c.geo.base_url;
    json tagger{{"backend", c.tagger.backend}, {"max_in_flight", c.tagger.max_in_flight},
                {"qps", c.tagger.queries_per_second}};
    if (!c.tagger.fixture.empty()) tagger["fixture"] = rel(c.tagger.fixture);
    if (!c.tagger.base_url.empty()) tagger["base_url"] = c.tagger.base_url;
    json doc{{"inputs", inputs},
             {"geo", geo},
             {"tagger", tagger},
             {"n_top_counties", c.n_top_counties},
             {"images_per_county", c.images_per_county},
             {"confidence_threshold", c.confidence_threshold},
             {"min_county_support", c.min_county_support},
             {"alpha", c.alpha},
             {"k_folds", c.k_folds},
             {"seed", c.seed},
             {"feature_sets", sets},
             {"statistics", stats},
             {"sweep_thresholds", c.sweep_thresholds},
             {"paired_test", std::string(paired_test_name(c.paired_test))},
             {"label_top", c.label_top},
             {"top_features", c.top_features},
             {"output_dir", rel(c.output_dir)}};
    return doc.dump(2) + "\n";
}

std::string_view stage_name(Stage stage) noexcept {
    switch (stage) {
        case Stage::ingest: return "ingest";
        case Stage::geotag: return "geotag";
        case Stage::tag: return "tag";
        case Stage::featurize: return "featurize";
        case Stage::evaluate: return "evaluate";
        case Stage::sweep: return "sweep";
        case Stage::report: return "report";
    }
    return "";
}

std::optional<Stage> parse_stage(std::string_view name) noexcept {
    for (auto s : {Stage::ingest, Stage::geotag, Stage::tag, Stage::featurize, Stage::evaluate, Stage::sweep,
                   Stage::report})
        if (stage_name(s) == name) return s;
    return std::nullopt;
}

StageOutcome run_stage(Stage stage, const PipelineConfig& config, const StageOptions& options) {
    config.validate();
    fs::create_directories(config.output_dir);
    StageContext ctx{config, options, {}};
    ctx.outcome.stage = stage;

    const auto input_hash = stage_input_hash(stage, config);
    if (!options.force) {
        if (auto artifacts = reusable(stage, config, input_hash)) {
            ctx.outcome.reused = true;
            ctx.outcome.artifacts = std::move(*artifacts);
            ctx.log("inputs unchanged, reusing {} artifact(s)", ctx.outcome.artifacts.size());
            return ctx.outcome;
        }
    }
    switch (stage) {
        case Stage::ingest: stage_ingest(ctx); break;
        case Stage::geotag: stage_geotag(ctx); break;
        case Stage::tag: stage_tag(ctx); break;
        case Stage::featurize: stage_featurize(ctx); break;
        case Stage::evaluate: stage_evaluate(ctx); break;
        case Stage::sweep: stage_sweep(ctx); break;
        case Stage::report: stage_report(ctx); break;
    }
    finish_stage(ctx, input_hash);
    return ctx.outcome;
}

std::vector<StageOutcome> run_pipeline(const PipelineConfig& config, const StageOptions& options) {
    std::vector<StageOutcome> outcomes;
    for (auto s : {Stage::ingest, Stage::geotag, Stage::tag, Stage::featurize, Stage::evaluate, Stage::report}) {
        outcomes.push_back(run_stage(s, config, options));
        if (outcomes.back().exit_code != 0) break;
    }
    return outcomes;
}

SynthSpec parse_synth_spec(std::string_view json_text) {
    SynthSpec spec;
    if (json_text.empty()) return spec;
    const json doc = parse_json_document(json_text, "config");
    if (!doc.is_object() || !doc.contains("synth")) return spec;
    Section s(doc.at("synth"), "synth");
    s.allow_only({"n_counties", "images_per_county", "n_signal_tags", "n_noise_tags", "n_user_tags", "planted_stat",
                  "weights", "zero_weights", "signal_sd", "noise_std", "signal_confidence", "noise_confidence",
                  "planting_threshold", "signal_rate", "noise_rate", "latent_factors", "factor_strength",
                  "idiosyncratic", "user_tagged_fraction", "seed"});
    s.read("n_counties", spec.n_counties);
    s.read("images_per_county", spec.images_per_county);
    s.read("n_signal_tags", spec.n_signal_tags);
    s.read("n_noise_tags", spec.n_noise_tags);
    s.read("n_user_tags", spec.n_user_tags);
    if (s.has("planted_stat")) {
        std::string name;
        s.read("planted_stat", name);
        auto stat = parse_stat(name);
        if (!stat) throw ConfigError(fmt::format("config key 'synth.planted_stat': unknown statistic '{}'", name));
        spec.planted_stat = *stat;
    }
    if (s.has("weights")) {
        const auto& w = s.at("weights");
        if (!w.is_array()) throw ConfigError("config key 'synth.weights' must be an array");
        for (const auto& v : w) {
            if (!v.is_number()) throw ConfigError("config key 'synth.weights' must hold numbers");
            spec.weights.push_back(v.get<double>());
        }
    }
    bool zero = false;
    s.read("zero_weights", zero);
    s.read("signal_sd", spec.signal_sd);
    s.read("noise_std", spec.noise_std);
    for (auto [key, band] : {std::pair<const char*, ConfidenceBand*>{"signal_confidence", &spec.signal_confidence},
                             {"noise_confidence", &spec.noise_confidence}}) {
        if (!s.has(key)) continue;
        const auto& v = s.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ConfigError(fmt::format("config key '{}' must be [low, high]", s.path(key)));
        *band = {v[0].get<double>(), v[1].get<double>()};
    }
    s.read("planting_threshold", spec.planting_threshold);
    s.read("signal_rate", spec.signal_rate);
    s.read("noise_rate", spec.noise_rate);
    s.read("latent_factors", spec.latent_factors);
    s.read("factor_strength", spec.factor_strength);
    s.read("idiosyncratic", spec.idiosyncratic);
    s.read("user_tagged_fraction", spec.user_tagged_fraction);
    s.read("seed", spec.seed);
    if (zero) spec.weights.assign(spec.n_signal_tags, 0.0);
    spec.validate();
    return spec;
}

fs::path run_synth(const SynthSpec& spec, const fs::path& dir) {
    const auto data = generate(spec);
    const auto files = write_dataset(data, dir);
    PipelineConfig c;
    c.images = files.images;
    c.health = files.health;
    c.demographics = files.demographics;
    c.county_names = files.county_names;
    c.geo.backend = "offline";
    c.geo.fixture = files.geo_fixture;
    c.tagger.backend = "none";
    c.seed = spec.seed;
    c.output_dir = dir / "run";
    const auto path = dir / "config.json";
    write_text(path, config_json(c, dir));
    return path;
}

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const ServiceError*>(&e)) return 3;
    return 2;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", h);
}

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::uint64_t h = 14695981039346656037ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return fmt::format("{:016x}", h);
}

}  // namespace healthtags
