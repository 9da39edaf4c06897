#pragma once

#include "tailbreak/changepoints.hpp"
#include "tailbreak/market_data.hpp"
#include "tailbreak/structure.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tailbreak {

struct DateRange {
    Date start;
    Date end;
};

struct FetchOptions {
    // Placeholders {ticker}, {start} and {end} are substituted (ISO dates).
    std::string url_template;
    std::filesystem::path cache_dir;
    int max_attempts = 3;
    std::chrono::milliseconds backoff{500};
    // Minimum spacing between consecutive requests.
    std::chrono::milliseconds min_interval{1000};
    std::chrono::seconds timeout{30};
    OhlcSchema payload_schema;
};

struct FetchResult {
    std::filesystem::path path;
    bool from_cache = false;
};

// Downloads OHLC text and stores it canonically in the cache. A cache hit
// never touches the network. Transport failures are retried with exponential
// backoff, then raised as Error(network).
class Fetcher {
public:
    explicit Fetcher(FetchOptions options);

    FetchResult fetch(const std::string& ticker, DateRange range);
    std::filesystem::path cache_path(const std::string& ticker, DateRange range) const;
    int requests_made() const noexcept { return requests_; }

private:
    FetchOptions options_;
    int requests_ = 0;
    std::optional<std::chrono::steady_clock::time_point> last_request_;
};

struct StudyConfig {
    // Data source: a directory of "<TICKER>.csv" OHLC files, or an endpoint
    // template plus ticker list.
    std::filesystem::path data_dir;
    std::string endpoint;
    std::vector<std::string> tickers;  // optional filter/order for data_dir
    OhlcSchema schema;
    int fetch_max_attempts = 3;
    int fetch_min_interval_ms = 1000;
    int fetch_backoff_ms = 500;

    DateRange pre{Date{std::chrono::year{2018}, std::chrono::month{6}, std::chrono::day{30}},
                  Date{std::chrono::year{2019}, std::chrono::month{12}, std::chrono::day{31}}};
    DateRange post{Date{std::chrono::year{2020}, std::chrono::month{1}, std::chrono::day{1}},
                   Date{std::chrono::year{2020}, std::chrono::month{6}, std::chrono::day{24}}};

    double two_sided_fraction = 0.05;
    double upper_fraction = 0.10;
    DetectorConfig detector;
    Linkage linkage = Linkage::average;
    int top_k = 3;

    std::filesystem::path output_dir = "bundle";
    std::filesystem::path cache_dir;

    // Throws Error(config).
    void validate() const;
};

StudyConfig parse_study_config(const std::string& json_text);
StudyConfig load_study_config(const std::filesystem::path& path);
std::string study_config_to_json(const StudyConfig& cfg);

struct Exclusion {
    std::string ticker;
    std::string reason;
};

struct StudySummary {
    std::vector<std::string> tickers;
    std::vector<Exclusion> excluded;
    std::vector<std::string> files;  // relative to output_dir, sorted
};

// Runs the whole pipeline and writes the artifact bundle into cfg.output_dir.
StudySummary run_study(const StudyConfig& cfg);

// Markdown summary of a bundle directory. Throws Error(missing_artifact)
// naming the first absent file.
std::string render_report(const std::filesystem::path& bundle_dir);

}  // namespace tailbreak
