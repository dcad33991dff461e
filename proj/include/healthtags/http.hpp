#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace healthtags {

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};  // doubled after each failed attempt
};

/// Token bucket with a burst of one: successive acquire() calls are spaced at
/// least 1/qps apart. Thread-safe. A non-positive rate disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double queries_per_second);
    void acquire();

private:
    using Clock = std::chrono::steady_clock;
    std::mutex mutex_;
    Clock::duration interval_{};
    Clock::time_point next_slot_{};
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// Plain GET client bound to one scheme://host[:port] origin.
class HttpGetter {
public:
    HttpGetter(std::string_view base_url, std::chrono::milliseconds timeout);

    /// `target` is the path plus query string. Returns nullopt when no HTTP
    /// response was received (connection refused, DNS failure, timeout).
    std::optional<HttpResponse> get(const std::string& target, const HttpHeaders& headers = {}) const;

    const std::string& origin() const noexcept { return origin_; }
    const std::string& base_path() const noexcept { return base_path_; }

private:
    std::string origin_;
    std::string base_path_;
    std::chrono::milliseconds timeout_;
};

std::string url_encode(std::string_view text);

/// "Basic <base64(user:password)>" for an Authorization header.
std::string basic_auth_header_value(std::string_view user, std::string_view password);

/// Runs `attempt` up to policy.max_attempts times, sleeping with exponential
/// backoff between tries while `attempt` returns nullopt. The sleeper is
/// injectable so tests do not wait in real time.
template <typename T>
std::optional<T> with_retries(const RetryPolicy& policy, const std::function<std::optional<T>()>& attempt,
                              const std::function<void(std::chrono::milliseconds)>& sleep);

void sleep_for(std::chrono::milliseconds d);

template <typename T>
std::optional<T> with_retries(const RetryPolicy& policy, const std::function<std::optional<T>()>& attempt,
                              const std::function<void(std::chrono::milliseconds)>& sleep) {
    auto backoff = policy.initial_backoff;
    for (int i = 0; i < policy.max_attempts; ++i) {
        if (i > 0) {
            sleep(backoff);
            backoff *= 2;
        }
        if (auto result = attempt()) return result;
    }
    return std::nullopt;
}

}  // namespace healthtags
