#include "healthtags/tagging.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <optional>
#include <thread>

#include <json.hpp>

#include "healthtags/error.hpp"

namespace healthtags {

using nlohmann::json;

std::string_view tag_status_name(TagStatus status) noexcept {
    switch (status) {
        case TagStatus::ok: return "ok";
        case TagStatus::image_gone: return "image_gone";
        case TagStatus::malformed: return "malformed";
        case TagStatus::failed: return "failed";
    }
    return "failed";
}

namespace {

std::optional<TagStatus> parse_tag_status(std::string_view name) {
    for (auto s : {TagStatus::ok, TagStatus::image_gone, TagStatus::malformed, TagStatus::failed})
        if (tag_status_name(s) == name) return s;
    return std::nullopt;
}

}  // namespace

ConfidenceThreshold::ConfidenceThreshold(double percent) : percent_(percent) {
    if (!(percent >= 0.0 && percent <= 100.0))
        throw ConfigError("confidence threshold must lie in [0, 100], got " +
                          std::to_string(percent));
}

std::vector<MachineTag> filter_by_confidence(std::span<const MachineTag> tags,
                                             ConfidenceThreshold threshold) {
    std::vector<MachineTag> kept;
    std::copy_if(tags.begin(), tags.end(), std::back_inserter(kept),
                 [&](const MachineTag& t) { return t.confidence > threshold.value(); });
    return kept;
}

std::vector<ImageRecord> filter_records_by_confidence(std::span<const ImageRecord> records,
                                                      ConfidenceThreshold threshold) {
    std::vector<ImageRecord> out(records.begin(), records.end());
    for (auto& rec : out)
        if (rec.machine_tags) rec.machine_tags = filter_by_confidence(*rec.machine_tags, threshold);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<MachineTag> decode_tag_array(const json& arr) {
    std::vector<MachineTag> tags;
    for (const auto& item : arr) {
        if (!item.is_object()) throw MalformedResponse("tag entry is not an object");
        auto name = item.find("tag");
        auto conf = item.find("confidence");
        if (name == item.end() || conf == item.end() || !conf->is_number())
            throw MalformedResponse("tag entry needs 'tag' and numeric 'confidence'");
        std::string text;
        if (name->is_string()) {
            text = name->get<std::string>();
        } else if (name->is_object() && name->contains("en") && (*name)["en"].is_string()) {
            text = (*name)["en"].get<std::string>();
        } else {
            throw MalformedResponse("tag name is neither a string nor {\"en\": ...}");
        }
        MachineTag tag{normalize_tag(text), conf->get<double>()};
        if (tag.tag.empty()) throw MalformedResponse("empty tag name");
        if (!(tag.confidence >= 0.0 && tag.confidence <= 100.0))
            throw MalformedResponse("confidence " + std::to_string(tag.confidence) +
                                    " outside [0, 100]");
        tags.push_back(std::move(tag));
    }
    return tags;
}

}  // namespace

std::vector<MachineTag> parse_tag_payload(std::string_view body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw MalformedResponse("tagger returned malformed JSON");
    if (doc.is_array()) return decode_tag_array(doc);
    if (doc.is_object()) {
        if (auto it = doc.find("tags"); it != doc.end() && it->is_array()) return decode_tag_array(*it);
        if (auto res = doc.find("result"); res != doc.end() && res->is_object()) {
            if (auto it = res->find("tags"); it != res->end() && it->is_array())
                return decode_tag_array(*it);
        }
    }
    throw MalformedResponse("tagger response contains no tag array");
}

// ---------------------------------------------------------------------------

FixtureTagger FixtureTagger::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open tagger fixture " + path.string());
    std::map<std::string, TaggerResponse> responses;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.string() + ":" + std::to_string(line_no);
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("id") || !obj["id"].is_string())
            throw DataError(where + ": fixture line needs a string id");
        TaggerResponse resp;
        resp.image_id = obj["id"].get<std::string>();
        auto status = parse_tag_status(obj.value("status", std::string("ok")));
        if (!status) throw DataError(where + ": unknown status");
        resp.status = *status;
        resp.detail = obj.value("detail", std::string());
        if (resp.status == TagStatus::ok) {
            try {
                resp.tags = decode_tag_array(obj.value("tags", json::array()));
            } catch (const MalformedResponse& e) {
                resp.status = TagStatus::malformed;
                resp.detail = e.what();
            }
        }
        responses.insert_or_assign(resp.image_id, std::move(resp));
    }
    return FixtureTagger(std::move(responses));
}

TaggerResponse FixtureTagger::request_tags(const ImageRecord& image) {
    auto it = responses_.find(image.id);
    if (it == responses_.end())
        return {image.id, {}, TagStatus::failed, "image not present in fixture"};
    return it->second;
}

void write_tagger_fixture(const std::filesystem::path& path,
                          std::span<const TaggerResponse> responses) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : responses) {
        json tags = json::array();
        for (const auto& t : r.tags) tags.push_back({{"tag", t.tag}, {"confidence", t.confidence}});
        json obj{{"id", r.image_id}, {"status", tag_status_name(r.status)}, {"tags", tags}};
        if (!r.detail.empty()) obj["detail"] = r.detail;
        out << obj.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------

std::pair<std::string, std::string> read_tagger_credentials(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read tagger credentials " + path.string());
    std::string line;
    std::getline(in, line);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    const auto colon = line.find(':');
    if (colon == std::string::npos || colon == 0)
        throw ConfigError("tagger credentials must be 'key:secret' in " + path.string());
    return {line.substr(0, colon), line.substr(colon + 1)};
}

RemoteTagger::RemoteTagger(RemoteTaggerOptions options,
                           std::function<void(std::chrono::milliseconds)> sleeper)
    : options_(std::move(options)),
      http_(options_.base_url, options_.timeout),
      limiter_(options_.queries_per_second),
      sleeper_(std::move(sleeper)) {}

TaggerResponse RemoteTagger::request_tags(const ImageRecord& image) {
    std::string image_url = options_.image_url_template;
    if (auto pos = image_url.find("{id}"); pos != std::string::npos)
        image_url.replace(pos, 4, image.id);
    const auto target = http_.base_path() + "/tagging?url=" + url_encode(image_url);
    HttpHeaders headers;
    if (!options_.api_key.empty())
        headers.emplace_back("Authorization",
                             basic_auth_header_value(options_.api_key, options_.api_secret));

    bool reached = false;
    int last_status = 0;
    std::function<std::optional<HttpResponse>()> attempt = [&]() -> std::optional<HttpResponse> {
        limiter_.acquire();
        ++requests_;
        auto res = http_.get(target, headers);
        if (!res) return std::nullopt;
        reached = true;
        last_status = res->status;
        if (res->status == 429 || res->status >= 500) return std::nullopt;
        return res;
    };
    auto res = with_retries<HttpResponse>(options_.retry, attempt, sleeper_);
    if (!res) {
        if (!reached)
            throw ServiceError("tagger at " + http_.origin() + " unreachable after " +
                               std::to_string(options_.retry.max_attempts) + " attempts");
        return {image.id, {}, TagStatus::failed,
                "HTTP " + std::to_string(last_status) + " after retries"};
    }
    switch (res->status) {
        case 200:
            try {
                return {image.id, parse_tag_payload(res->body), TagStatus::ok, ""};
            } catch (const MalformedResponse& e) {
                return {image.id, {}, TagStatus::malformed, e.what()};
            }
        case 401:
        case 403:
            throw ConfigError("tagger rejected the credentials (HTTP " +
                              std::to_string(res->status) + ")");
        case 404:
        case 410:
        case 422:
            return {image.id, {}, TagStatus::image_gone, "HTTP " + std::to_string(res->status)};
        default:
            return {image.id, {}, TagStatus::failed, "HTTP " + std::to_string(res->status)};
    }
}

// ---------------------------------------------------------------------------

TagBatchResult tag_images(std::vector<ImageRecord> records, TaggerBackend& backend,
                          std::size_t max_in_flight) {
    TagBatchResult result;
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].machine_tags)
            ++result.already_tagged;
        else
            pending.push_back(i);
    }

    std::vector<std::optional<TaggerResponse>> responses(pending.size());
    std::vector<std::exception_ptr> errors(pending.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    auto work = [&] {
        for (std::size_t i = next++; i < pending.size() && !abort; i = next++) {
            try {
                responses[i] = backend.request_tags(records[pending[i]]);
            } catch (...) {
                errors[i] = std::current_exception();
                abort = true;
            }
        }
    };
    const auto n_workers = std::min(std::max<std::size_t>(max_in_flight, 1), pending.size());
    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<bool> drop(records.size(), false);
    for (std::size_t i = 0; i < pending.size(); ++i) {
        auto& rec = records[pending[i]];
        auto& resp = *responses[i];
        resp.image_id = rec.id;
        switch (resp.status) {
            case TagStatus::ok:
                rec.machine_tags = resp.tags;
                ++result.tagged;
                break;
            case TagStatus::image_gone:
                if (rec.user_tags.empty()) {
                    drop[pending[i]] = true;
                    ++result.gone_dropped;
                } else {
                    rec.machine_tags = std::vector<MachineTag>{};
                    ++result.gone_kept;
                }
                break;
            case TagStatus::malformed: ++result.malformed; break;
            case TagStatus::failed: ++result.failed; break;
        }
        result.responses.push_back(std::move(resp));
    }
    std::sort(result.responses.begin(), result.responses.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });

    for (std::size_t i = 0; i < records.size(); ++i)
        if (!drop[i]) result.records.push_back(std::move(records[i]));
    return result;
}

}  // namespace healthtags
