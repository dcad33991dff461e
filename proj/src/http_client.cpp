#include "healthtags/http.hpp"

#include <thread>

#include <httplib.h>

#include "healthtags/error.hpp"

namespace healthtags {

RateLimiter::RateLimiter(double queries_per_second) {
    if (queries_per_second > 0.0)
        interval_ = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(1.0 / queries_per_second));
}

void RateLimiter::acquire() {
    if (interval_ == Clock::duration::zero()) return;
    Clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = Clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

namespace {

std::pair<std::string, std::string> split_base_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        throw ConfigError("base URL must include a scheme: " + std::string(url));
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) return {std::string(url), ""};
    std::string path(url.substr(path_start));
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {std::string(url.substr(0, path_start)), path};
}

}  // namespace

HttpGetter::HttpGetter(std::string_view base_url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
    std::tie(origin_, base_path_) = split_base_url(base_url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (origin_.rfind("https://", 0) == 0)
        throw ConfigError("https endpoints need a build with OpenSSL: " + origin_);
#endif
}

std::optional<HttpResponse> HttpGetter::get(const std::string& target,
                                            const HttpHeaders& headers) const {
    httplib::Client client(origin_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_follow_location(true);

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Get(target, hdrs);
    if (!res) return std::nullopt;
    return HttpResponse{res->status, res->body};
}

std::string url_encode(std::string_view text) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += kHex[c >> 4];
            out += kHex[c & 0xF];
        }
    }
    return out;
}

std::string basic_auth_header_value(std::string_view user, std::string_view password) {
    auto header = httplib::make_basic_authentication_header(std::string(user),
                                                            std::string(password));
    return header.second;
}

void sleep_for(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

}  // namespace healthtags
