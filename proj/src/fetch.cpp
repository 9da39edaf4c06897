#include "tailbreak/error.hpp"
#include "tailbreak/study.hpp"

#include <httplib.h>

#include <fstream>
#include <sstream>
#include <thread>

namespace tailbreak {

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string target;  // /path?query
};

Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::config, "endpoint URL needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

FetchResult Fetcher::fetch(const std::string& ticker, DateRange range) {
    const auto path = cache_path(ticker, range);
    if (std::filesystem::exists(path)) {
        return {path, true};
    }

    std::string url = substitute(options_.url_template, "{ticker}", ticker);
    url = substitute(url, "{start}", format_date(range.start));
    url = substitute(url, "{end}", format_date(range.end));
    const Url parts = split_url(url);

    std::string last_error;
    for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(options_.backoff * (1 << std::min(attempt - 1, 10)));
        }
        if (last_request_) {
            const auto ready = *last_request_ + options_.min_interval;
            std::this_thread::sleep_until(ready);
        }
        last_request_ = std::chrono::steady_clock::now();
        ++requests_;

        httplib::Client client(parts.origin);
        client.set_connection_timeout(options_.timeout);
        client.set_read_timeout(options_.timeout);
        auto res = client.Get(parts.target);
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw Error(ErrorCode::network, ticker + ": HTTP " + std::to_string(res->status) + " from " + url);
        }

        std::istringstream payload(res->body);
        const OhlcSeries series = parse_ohlc(payload, options_.payload_schema, ticker);
        std::filesystem::create_directories(options_.cache_dir);
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) {
                throw Error(ErrorCode::io, "cannot write cache file " + tmp);
            }
            write_ohlc(out, series);
        }
        std::filesystem::rename(tmp, path);
        return {path, false};
    }
    throw Error(ErrorCode::network, ticker + ": giving up after " + std::to_string(options_.max_attempts) +
                                        " attempts (" + last_error + ")");
}

}  // namespace tailbreak
