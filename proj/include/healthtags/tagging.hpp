#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "healthtags/error.hpp"
#include "healthtags/http.hpp"
#include "healthtags/types.hpp"

namespace healthtags {

enum class TagStatus {
    ok,
    image_gone,  // the service could not fetch the image; not an error
    malformed,   // response failed validation and was discarded
    failed,      // permanent per-image failure
};

std::string_view tag_status_name(TagStatus status) noexcept;

struct TaggerResponse {
    std::string image_id;
    std::vector<MachineTag> tags;
    TagStatus status = TagStatus::ok;
    std::string detail;
};

/// Percentage cut-off for machine tags; tags must score strictly above it.
class ConfidenceThreshold {
public:
    /// Throws ConfigError outside [0, 100].
    explicit ConfidenceThreshold(double percent = 20.0);
    double value() const noexcept { return percent_; }

private:
    double percent_;
};

std::vector<MachineTag> filter_by_confidence(std::span<const MachineTag> tags,
                                             ConfidenceThreshold threshold);

/// Applies filter_by_confidence to every record that carries machine tags.
std::vector<ImageRecord> filter_records_by_confidence(std::span<const ImageRecord> records,
                                                      ConfidenceThreshold threshold);

class MalformedResponse : public DataError {
public:
    using DataError::DataError;
};

/// Decodes a tagging payload. Accepts a bare array of {tag, confidence}, an
/// object with a "tags" array, or an Imagga-style {"result": {"tags": [...]}}
/// where a tag may be {"en": "..."}. Throws MalformedResponse on bad shape or
/// confidence outside [0, 100].
std::vector<MachineTag> parse_tag_payload(std::string_view body);

class TaggerBackend {
public:
    virtual ~TaggerBackend() = default;
    /// Never throws for per-image problems; those come back as a status.
    /// Throws ConfigError on rejected credentials and ServiceError when the
    /// service cannot be reached at all.
    virtual TaggerResponse request_tags(const ImageRecord& image) = 0;
};

/// Serves responses from a JSON-Lines dump keyed by image id:
/// {"id": "...", "status": "ok", "tags": [{"tag": ..., "confidence": ...}]}.
class FixtureTagger final : public TaggerBackend {
public:
    static FixtureTagger load(const std::filesystem::path& path);
    explicit FixtureTagger(std::map<std::string, TaggerResponse> responses)
        : responses_(std::move(responses)) {}

    TaggerResponse request_tags(const ImageRecord& image) override;

private:
    std::map<std::string, TaggerResponse> responses_;
};

void write_tagger_fixture(const std::filesystem::path& path, std::span<const TaggerResponse> responses);

struct RemoteTaggerOptions {
    std::string base_url;                   // requests go to <base_url>/tagging
    std::string api_key;
    std::string api_secret;
    std::string image_url_template = "{id}";  // "{id}" is replaced by the image id
    RetryPolicy retry;
    double queries_per_second = 5.0;
    std::chrono::milliseconds timeout{30000};
};

/// Reads "key:secret" from the first line of a credentials file.
std::pair<std::string, std::string> read_tagger_credentials(const std::filesystem::path& path);

class RemoteTagger final : public TaggerBackend {
public:
    explicit RemoteTagger(RemoteTaggerOptions options,
                          std::function<void(std::chrono::milliseconds)> sleeper = sleep_for);

    TaggerResponse request_tags(const ImageRecord& image) override;

    std::size_t requests_sent() const noexcept { return requests_.load(); }

private:
    RemoteTaggerOptions options_;
    HttpGetter http_;
    RateLimiter limiter_;
    std::function<void(std::chrono::milliseconds)> sleeper_;
    std::atomic<std::size_t> requests_{0};
};

struct TagBatchResult {
    std::vector<ImageRecord> records;  // input order, minus dropped images
    std::vector<TaggerResponse> responses;  // sorted by image id; only requested images
    std::size_t already_tagged = 0;
    std::size_t tagged = 0;
    std::size_t gone_kept = 0;     // unavailable, kept for their user tags
    std::size_t gone_dropped = 0;  // unavailable and without user tags
    std::size_t malformed = 0;
    std::size_t failed = 0;
};

/// Requests tags for every record whose machine_tags are absent, with at most
/// `max_in_flight` concurrent requests. Unavailable images keep an empty tag
/// list when they carry user tags and are dropped otherwise. Malformed and
/// failed responses leave machine_tags absent, which keeps the image out of
/// the machine-tag path and lets a later run retry it.
TagBatchResult tag_images(std::vector<ImageRecord> records, TaggerBackend& backend,
                          std::size_t max_in_flight = 4);

}  // namespace healthtags
