#include "synthetic.hpp"

#include "tailbreak/error.hpp"
#include "tailbreak/study.hpp"

#include <gtest/gtest.h>

#include "httplib.h"
#include <nlohmann/json.hpp>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

using namespace tailbreak;
using namespace std::chrono;

namespace {

constexpr sys_days kFirst = sys_days{year{2020} / 1 / 1};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Writes instruments for 300 days and a config with a 180/100 day split.
StudyConfig small_study(const std::string& name, const std::vector<std::pair<std::string, double>>& instruments) {
    const auto root = synthetic::fresh_dir(name);
    const auto data = root / "data";
    std::filesystem::create_directories(data);
    std::uint64_t seed = 100;
    for (const auto& [ticker, vol] : instruments) {
        synthetic::write_ohlc(data, ticker, seed++, kFirst, 300, vol);
    }
    StudyConfig cfg;
    cfg.data_dir = data;
    cfg.pre = {Date{kFirst + days{1}}, Date{kFirst + days{180}}};
    cfg.post = {Date{kFirst + days{181}}, Date{kFirst + days{299}}};
    cfg.detector.mc_replications = 2000;
    cfg.output_dir = root / "bundle";
    cfg.cache_dir = root / "cache";
    return cfg;
}

LabeledMatrix load_matrix(const std::filesystem::path& p) {
    std::ifstream in(p);
    return read_matrix(in);
}

class FakeServer {
public:
    explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Get(".*", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/ohlc/{ticker}?from={start}&to={end}"; }

    std::atomic<int> hits{0};

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

FetchOptions fast_options(const std::string& url, const std::filesystem::path& cache) {
    FetchOptions o;
    o.url_template = url;
    o.cache_dir = cache;
    o.max_attempts = 3;
    o.backoff = milliseconds(5);
    o.min_interval = milliseconds(0);
    o.timeout = seconds(5);
    return o;
}

const DateRange kRange{Date{kFirst}, Date{kFirst + days{9}}};

}  // namespace

TEST(Fetch, SecondCallIsServedFromCache) {
    const auto payload = synthetic::ohlc_text(1, kFirst, 10, 0.02);
    std::string seen_target;
    FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen_target = req.path + "?" + req.get_param_value("from") + "&" + req.get_param_value("to");
        res.set_content(payload, "text/csv");
    });
    const auto cache = synthetic::fresh_dir("fetch_cache");
    Fetcher fetcher(fast_options(server.url(), cache));
    const auto first = fetcher.fetch("BTC", kRange);
    EXPECT_FALSE(first.from_cache);
    EXPECT_EQ(seen_target, "/ohlc/BTC?2020-01-01&2020-01-10");
    const auto second = fetcher.fetch("BTC", kRange);
    EXPECT_TRUE(second.from_cache);
    EXPECT_EQ(first.path, second.path);
    EXPECT_EQ(server.hits.load(), 1);
    EXPECT_EQ(fetcher.requests_made(), 1);
    const auto canonical = read_ohlc_file(first.path, OhlcSchema{}, "BTC");
    EXPECT_EQ(canonical.size(), 10u);
}

TEST(Fetch, WarmCacheSurvivesUnreachableEndpoint) {
    const auto cache = synthetic::fresh_dir("fetch_warm");
    {
        const auto payload = synthetic::ohlc_text(2, kFirst, 10, 0.02);
        FakeServer server([&](const httplib::Request&, httplib::Response& res) { res.set_content(payload, "text/csv"); });
        Fetcher(fast_options(server.url(), cache)).fetch("ETH", kRange);
    }
    Fetcher offline(fast_options("http://127.0.0.1:1/{ticker}", cache));
    const auto r = offline.fetch("ETH", kRange);
    EXPECT_TRUE(r.from_cache);
    EXPECT_EQ(offline.requests_made(), 0);
}

TEST(Fetch, ColdCacheUnreachableGivesNetworkError) {
    const auto cache = synthetic::fresh_dir("fetch_cold");
    Fetcher offline(fast_options("http://127.0.0.1:1/{ticker}", cache));
    try {
        offline.fetch("ETH", kRange);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::network);
    }
    EXPECT_EQ(offline.requests_made(), 3);
    EXPECT_TRUE(std::filesystem::is_empty(cache));
}

TEST(Fetch, RetriesServerErrorsThenSucceeds) {
    const auto payload = synthetic::ohlc_text(3, kFirst, 10, 0.02);
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        static int calls = 0;
        if (++calls < 3) {
            res.status = 503;
            return;
        }
        res.set_content(payload, "text/csv");
    });
    Fetcher fetcher(fast_options(server.url(), synthetic::fresh_dir("fetch_retry")));
    EXPECT_FALSE(fetcher.fetch("XRP", kRange).from_cache);
    EXPECT_EQ(server.hits.load(), 3);
}

TEST(Fetch, MalformedPayloadIsIngestionError) {
    FakeServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content("date,close,high,low\n2020-01-01,oops,1,1\n", "text/csv");
    });
    const auto cache = synthetic::fresh_dir("fetch_bad");
    Fetcher fetcher(fast_options(server.url(), cache));
    try {
        fetcher.fetch("BAD", kRange);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse);
    }
    EXPECT_EQ(server.hits.load(), 1);
    EXPECT_TRUE(std::filesystem::is_empty(cache));
}

TEST(Fetch, NotFoundIsNotRetried) {
    FakeServer server([](const httplib::Request&, httplib::Response& res) { res.status = 404; });
    Fetcher fetcher(fast_options(server.url(), synthetic::fresh_dir("fetch_404")));
    EXPECT_THROW(fetcher.fetch("NONE", kRange), Error);
    EXPECT_EQ(server.hits.load(), 1);
}

TEST(Fetch, RateLimitSpacesRequests) {
    const auto payload = synthetic::ohlc_text(4, kFirst, 10, 0.02);
    FakeServer server([&](const httplib::Request&, httplib::Response& res) { res.set_content(payload, "text/csv"); });
    auto opts = fast_options(server.url(), synthetic::fresh_dir("fetch_rate"));
    opts.min_interval = milliseconds(150);
    Fetcher fetcher(opts);
    const auto t0 = steady_clock::now();
    fetcher.fetch("A", kRange);
    fetcher.fetch("B", kRange);
    fetcher.fetch("C", kRange);
    EXPECT_GE(steady_clock::now() - t0, milliseconds(300));
}

TEST(StudyConfig, ParseAndRoundTrip) {
    const auto cfg = parse_study_config(R"({
        "data": {"directory": "d", "tickers": ["A", "B"]},
        "detector": {"arl0": 1000, "seed": 7},
        "clustering": {"linkage": "complete"},
        "tails": {"upper_fraction": 0.2}
    })");
    EXPECT_EQ(cfg.detector.arl0, 1000);
    EXPECT_EQ(cfg.detector.rng_seed, 7u);
    EXPECT_EQ(cfg.detector.burn_in, 20);
    EXPECT_EQ(cfg.linkage, Linkage::complete);
    EXPECT_EQ(cfg.upper_fraction, 0.2);
    EXPECT_EQ(format_date(cfg.pre.start), "2018-06-30");
    EXPECT_EQ(format_date(cfg.post.end), "2020-06-24");
    const auto again = parse_study_config(study_config_to_json(cfg));
    EXPECT_EQ(study_config_to_json(again), study_config_to_json(cfg));
}

TEST(StudyConfig, Rejections) {
    auto code = [](const std::string& text) {
        try {
            parse_study_config(text).validate();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::internal;
    };
    EXPECT_EQ(code(R"({"data": {"directory": "d"}, "bogus": 1})"), ErrorCode::config);
    EXPECT_EQ(code(R"({"data": {"directory": "d"}, "tails": {"upper_fraction": 0.6}})"), ErrorCode::config);
    EXPECT_EQ(code(R"({"data": {"directory": "d"}, "windows": {"pre": {"start": "2020-01-01", "end": "2020-03-01"},
                        "post": {"start": "2020-02-01", "end": "2020-06-01"}}})"),
              ErrorCode::config);
    EXPECT_EQ(code(R"({"data": {}})"), ErrorCode::config);
    EXPECT_EQ(code("{not json"), ErrorCode::config);
}

TEST(Study, SmokeOnNoise) {
    const auto cfg = small_study("study_smoke", {{"A", 0.02}, {"B", 0.03}, {"C", 0.025}});
    const auto summary = run_study(cfg);
    EXPECT_EQ(summary.tickers, (std::vector<std::string>{"A", "B", "C"}));
    const auto& out = cfg.output_dir;
    for (const char* w : {"pre", "post"}) {
        for (const char* m : {"ER", "EV", "BR", "BV"}) {
            const auto d = load_matrix(out / w / (std::string("distance_") + m + ".csv"));
            EXPECT_EQ(d.labels(), summary.tickers);
            EXPECT_TRUE(d.is_symmetric());
            const auto a = load_matrix(out / w / (std::string("affinity_") + m + ".csv"));
            for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a(i, i), 1.0);
        }
    }
    int inc_count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(out / "inconsistency")) {
        if (entry.path().extension() != ".csv") continue;
        ++inc_count;
        const auto m = load_matrix(entry.path());
        EXPECT_EQ(m.labels(), summary.tickers);
        for (double v : m.entries()) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
    }
    EXPECT_EQ(inc_count, 8);

    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    for (const char* key : {"config", "instruments", "excluded", "windows", "thresholds", "conventions",
                            "inconsistency", "restricted_mean_signs", "files"}) {
        EXPECT_TRUE(manifest.contains(key)) << key;
    }
    EXPECT_EQ(manifest["config"]["detector"]["seed"], cfg.detector.rng_seed);
    for (const auto& f : manifest["files"]) {
        EXPECT_TRUE(std::filesystem::exists(out / f.get<std::string>())) << f;
    }
    EXPECT_EQ(manifest["files"].size(), summary.files.size());

    // windows are disjoint
    EXPECT_LT(manifest["windows"]["pre"]["last_date"].get<std::string>(),
              manifest["windows"]["post"]["first_date"].get<std::string>());
}

TEST(Study, RerunIsByteIdentical) {
    auto cfg = small_study("study_determinism", {{"A", 0.02}, {"B", 0.04}, {"C", 0.01}});
    const auto first_dir = cfg.output_dir;
    const auto summary = run_study(cfg);
    std::map<std::string, std::string> first;
    for (const auto& f : summary.files) first[f] = slurp(first_dir / f);
    std::filesystem::remove_all(first_dir);
    std::filesystem::remove_all(cfg.cache_dir);  // recalibrate from scratch as well
    const auto again = run_study(cfg);
    EXPECT_EQ(again.files, summary.files);
    for (const auto& f : again.files) EXPECT_EQ(slurp(first_dir / f), first[f]) << f;
}

TEST(Study, BadInstrumentIsExcluded) {
    auto cfg = small_study("study_exclude", {{"A", 0.02}, {"B", 0.03}, {"C", 0.025}});
    std::ofstream(cfg.data_dir / "ZZZ.csv") << "date,close,high,low\n2020-01-01,1,0.5,2\n";
    const auto summary = run_study(cfg);
    ASSERT_EQ(summary.excluded.size(), 1u);
    EXPECT_EQ(summary.excluded[0].ticker, "ZZZ");
    const auto manifest = nlohmann::json::parse(slurp(cfg.output_dir / "manifest.json"));
    EXPECT_EQ(manifest["excluded"][0]["ticker"], "ZZZ");
    EXPECT_EQ(summary.tickers.size(), 3u);
}

TEST(Study, FewerThanTwoSurvivorsAborts) {
    auto cfg = small_study("study_abort", {{"A", 0.02}});
    try {
        run_study(cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
    }
}

TEST(Study, NarrowInstrumentSeparatesFirst) {
    auto cfg = small_study("study_stable",
                           {{"A", 0.03}, {"B", 0.035}, {"C", 0.04}, {"D", 0.03}, {"E", 0.045}, {"S", 0.003}});
    run_study(cfg);
    for (const char* w : {"pre", "post"}) {
        const auto doc = nlohmann::json::parse(slurp(cfg.output_dir / w / "dendrogram_affinity_ER.json"));
        const auto& root = doc["merges"].back();
        // S is leaf 5 and joins last, on its own
        EXPECT_TRUE(root["a"] == 5 || root["b"] == 5) << w;
    }
}

TEST(Study, EndpointSourceUsesFetchCache) {
    const auto payload_a = synthetic::ohlc_text(7, kFirst, 300, 0.02);
    const auto payload_b = synthetic::ohlc_text(8, kFirst, 300, 0.03);
    FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        res.set_content(req.path.find("/A") != std::string::npos ? payload_a : payload_b, "text/csv");
    });
    auto cfg = small_study("study_endpoint", {});
    cfg.data_dir.clear();
    cfg.endpoint = server.url();
    cfg.tickers = {"A", "B"};
    cfg.fetch_min_interval_ms = 0;
    const auto summary = run_study(cfg);
    EXPECT_EQ(summary.tickers.size(), 2u);
    EXPECT_EQ(server.hits.load(), 2);
    run_study(cfg);
    EXPECT_EQ(server.hits.load(), 2);
}

TEST(Report, SmokeBundle) {
    const auto cfg = small_study("report_smoke", {{"A", 0.02}, {"B", 0.03}, {"C", 0.025}});
    run_study(cfg);
    const auto text = render_report(cfg.output_dir);
    std::size_t tables = 0;
    for (std::size_t pos = 0; (pos = text.find("\n### ", pos)) != std::string::npos; ++pos) ++tables;
    EXPECT_EQ(tables, 8u);
    // every norm in the bundle appears verbatim
    std::ifstream norms(cfg.output_dir / "frobenius.csv");
    std::string line;
    std::getline(norms, line);
    int count = 0;
    while (std::getline(norms, line)) {
        const auto value = line.substr(line.rfind(',') + 1);
        EXPECT_NE(text.find("| " + value + " |"), std::string::npos) << value;
        ++count;
    }
    EXPECT_EQ(count, 8);
}

TEST(Report, EmptyRankingSaysNone) {
    const auto cfg = small_study("report_none", {{"A", 0.02}, {"B", 0.03}, {"C", 0.025}});
    run_study(cfg);
    std::ofstream(cfg.output_dir / "anomaly" / "time_ER_top.csv") << "label,score\n";
    const auto text = render_report(cfg.output_dir);
    const auto at = text.find("### time_ER");
    ASSERT_NE(at, std::string::npos);
    EXPECT_NE(text.substr(at, 40).find("none"), std::string::npos);
}

TEST(Report, MissingArtifactIsNamed) {
    const auto cfg = small_study("report_missing", {{"A", 0.02}, {"B", 0.03}, {"C", 0.025}});
    run_study(cfg);
    std::filesystem::remove(cfg.output_dir / "anomaly" / "time_BV_top.csv");
    try {
        render_report(cfg.output_dir);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::missing_artifact);
        EXPECT_NE(std::string(e.what()).find("time_BV_top.csv"), std::string::npos) << e.what();
    }
}
