#include "tailbreak/study.hpp"

#include "tailbreak/error.hpp"
#include "tailbreak/setdist.hpp"
#include "tailbreak/tails.hpp"
#include "text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tailbreak {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kBundleVersion = "tailbreak-bundle 1";

Date day_before(Date d) {
    return Date{std::chrono::sys_days{d} - std::chrono::days{1}};
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// ---------------------------------------------------------------- config

void StudyConfig::validate() const {
    if (data_dir.empty() == endpoint.empty()) {
        throw Error(ErrorCode::config, "set exactly one of data.directory or data.endpoint");
    }
    if (!endpoint.empty() && tickers.empty()) {
        throw Error(ErrorCode::config, "data.endpoint needs a ticker list");
    }
    if (!endpoint.empty() && cache_dir.empty()) {
        throw Error(ErrorCode::config, "data.endpoint needs a cache directory");
    }
    if (pre.end < pre.start || post.end < post.start) {
        throw Error(ErrorCode::config, "window start must not follow its end");
    }
    if (!(pre.end < post.start || post.end < pre.start)) {
        throw Error(ErrorCode::config, "pre and post windows overlap");
    }
    for (double q : {two_sided_fraction, upper_fraction}) {
        if (!(q > 0.0 && q < 0.5)) {
            throw Error(ErrorCode::config, "tail fractions must lie in (0, 0.5)");
        }
    }
    if (top_k < 1) {
        throw Error(ErrorCode::config, "report.top_k must be positive");
    }
    detector.validate();
}

namespace {

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        out = obj.at(key).get<T>();
    }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) {
        throw Error(ErrorCode::config, where + " must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw Error(ErrorCode::config, "unknown key '" + key + "' in " + where);
        }
    }
}

DateRange read_range(const json& obj, const std::string& where) {
    check_keys(obj, {"start", "end"}, where);
    return {parse_date(obj.at("start").get<std::string>()), parse_date(obj.at("end").get<std::string>())};
}

}  // namespace

StudyConfig parse_study_config(const std::string& json_text) {
    StudyConfig cfg;
    try {
        const json doc = json::parse(json_text);
        check_keys(doc, {"data", "windows", "tails", "detector", "clustering", "report", "output_dir", "cache_dir"},
                   "config");
        if (doc.contains("data")) {
            const auto& data = doc.at("data");
            check_keys(data, {"directory", "endpoint", "tickers", "delimiter", "columns", "fetch"}, "data");
            if (data.contains("directory")) {
                cfg.data_dir = data.at("directory").get<std::string>();
            }
            read_opt(data, "endpoint", cfg.endpoint);
            read_opt(data, "tickers", cfg.tickers);
            if (data.contains("delimiter")) {
                const auto d = data.at("delimiter").get<std::string>();
                if (d.size() != 1) {
                    throw Error(ErrorCode::config, "data.delimiter must be one character");
                }
                cfg.schema.delimiter = d[0];
            }
            if (data.contains("columns")) {
                const auto& cols = data.at("columns");
                check_keys(cols, {"date", "close", "high", "low"}, "data.columns");
                read_opt(cols, "date", cfg.schema.date);
                read_opt(cols, "close", cfg.schema.close);
                read_opt(cols, "high", cfg.schema.high);
                read_opt(cols, "low", cfg.schema.low);
            }
            if (data.contains("fetch")) {
                const auto& f = data.at("fetch");
                check_keys(f, {"max_attempts", "min_interval_ms", "backoff_ms"}, "data.fetch");
                read_opt(f, "max_attempts", cfg.fetch_max_attempts);
                read_opt(f, "min_interval_ms", cfg.fetch_min_interval_ms);
                read_opt(f, "backoff_ms", cfg.fetch_backoff_ms);
            }
        }
        if (doc.contains("windows")) {
            const auto& w = doc.at("windows");
            check_keys(w, {"pre", "post"}, "windows");
            if (w.contains("pre")) cfg.pre = read_range(w.at("pre"), "windows.pre");
            if (w.contains("post")) cfg.post = read_range(w.at("post"), "windows.post");
        }
        if (doc.contains("tails")) {
            const auto& t = doc.at("tails");
            check_keys(t, {"two_sided_fraction", "upper_fraction"}, "tails");
            read_opt(t, "two_sided_fraction", cfg.two_sided_fraction);
            read_opt(t, "upper_fraction", cfg.upper_fraction);
        }
        if (doc.contains("detector")) {
            const auto& d = doc.at("detector");
            check_keys(d, {"arl0", "burn_in", "mc_replications", "seed"}, "detector");
            read_opt(d, "arl0", cfg.detector.arl0);
            read_opt(d, "burn_in", cfg.detector.burn_in);
            read_opt(d, "mc_replications", cfg.detector.mc_replications);
            read_opt(d, "seed", cfg.detector.rng_seed);
        }
        if (doc.contains("clustering")) {
            const auto& c = doc.at("clustering");
            check_keys(c, {"linkage"}, "clustering");
            if (c.contains("linkage")) {
                cfg.linkage = parse_linkage(c.at("linkage").get<std::string>());
            }
        }
        if (doc.contains("report")) {
            const auto& r = doc.at("report");
            check_keys(r, {"top_k"}, "report");
            read_opt(r, "top_k", cfg.top_k);
        }
        if (doc.contains("output_dir")) cfg.output_dir = doc.at("output_dir").get<std::string>();
        if (doc.contains("cache_dir")) cfg.cache_dir = doc.at("cache_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string("invalid config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::config) {
            throw;
        }
        throw Error(ErrorCode::config, e.what());
    }
    return cfg;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
    return parse_study_config(read_text(path));
}

namespace {

json config_json(const StudyConfig& cfg) {
    json doc;
    json data;
    if (!cfg.data_dir.empty()) data["directory"] = cfg.data_dir.generic_string();
    if (!cfg.endpoint.empty()) data["endpoint"] = cfg.endpoint;
    data["tickers"] = cfg.tickers;
    data["delimiter"] = std::string(1, cfg.schema.delimiter);
    data["columns"] = {{"date", cfg.schema.date},
                       {"close", cfg.schema.close},
                       {"high", cfg.schema.high},
                       {"low", cfg.schema.low}};
    data["fetch"] = {{"max_attempts", cfg.fetch_max_attempts},
                     {"min_interval_ms", cfg.fetch_min_interval_ms},
                     {"backoff_ms", cfg.fetch_backoff_ms}};
    doc["data"] = data;
    doc["windows"] = {{"pre", {{"start", format_date(cfg.pre.start)}, {"end", format_date(cfg.pre.end)}}},
                      {"post", {{"start", format_date(cfg.post.start)}, {"end", format_date(cfg.post.end)}}}};
    doc["tails"] = {{"two_sided_fraction", cfg.two_sided_fraction}, {"upper_fraction", cfg.upper_fraction}};
    doc["detector"] = {{"arl0", cfg.detector.arl0},
                       {"burn_in", cfg.detector.burn_in},
                       {"mc_replications", cfg.detector.mc_replications},
                       {"seed", cfg.detector.rng_seed}};
    doc["clustering"] = {{"linkage", std::string(to_string(cfg.linkage))}};
    doc["report"] = {{"top_k", cfg.top_k}};
    doc["output_dir"] = cfg.output_dir.generic_string();
    doc["cache_dir"] = cfg.cache_dir.generic_string();
    return doc;
}

}  // namespace

std::string study_config_to_json(const StudyConfig& cfg) {
    return config_json(cfg).dump(2) + "\n";
}

// ---------------------------------------------------------------- bundle

namespace {

class BundleWriter {
public:
    explicit BundleWriter(std::filesystem::path root) : root_(std::move(root)) {}

    template <typename F>
    void write(const std::string& rel, F&& body) {
        const auto path = root_ / rel;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw Error(ErrorCode::io, "cannot write " + path.string());
        }
        body(out);
        if (!out) {
            throw Error(ErrorCode::io, "write failed for " + path.string());
        }
        files_.insert(rel);
    }

    void text(const std::string& rel, const std::string& content) {
        write(rel, [&](std::ostream& out) { out << content; });
    }

    std::vector<std::string> files() const { return {files_.begin(), files_.end()}; }

private:
    std::filesystem::path root_;
    std::set<std::string> files_;
};

struct WindowResult {
    std::string name;
    Panel returns;
    Panel variance;
    DistanceMatrix d_er, d_ev, d_br, d_bv;
    AffinityMatrix a_er, a_ev, a_br, a_bv;
    std::vector<double> means;
};

// max{D} = 0 means every instrument is indistinguishable; the affinity is then
// taken as all ones rather than aborting the study.
AffinityMatrix affinity_or_ones(const DistanceMatrix& d, const std::string& name,
                                std::vector<std::string>& degenerate) {
    try {
        return affinity(d);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate) {
            throw;
        }
        degenerate.push_back(name);
        LabeledMatrix ones(d.labels());
        for (std::size_t i = 0; i < d.size(); ++i) {
            for (std::size_t j = 0; j < d.size(); ++j) {
                ones(i, j) = 1.0;
            }
        }
        return ones;
    }
}

void write_histogram(std::ostream& out, const Panel& p, std::size_t bins) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.instruments(); ++i) {
        for (double v : p.row(i)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(hi > lo)) {
        bins = 1;
    }
    const double width = bins == 1 ? 0.0 : (hi - lo) / static_cast<double>(bins);
    out << "bin_lower,bin_upper";
    for (const auto& t : p.tickers()) {
        out << ',' << t;
    }
    out << '\n';
    std::vector<std::vector<std::size_t>> counts(bins, std::vector<std::size_t>(p.instruments(), 0));
    for (std::size_t i = 0; i < p.instruments(); ++i) {
        for (double v : p.row(i)) {
            std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
            counts[std::min(b, bins - 1)][i] += 1;
        }
    }
    for (std::size_t b = 0; b < bins; ++b) {
        const double lower = lo + width * static_cast<double>(b);
        const double upper = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
        out << detail::format_double(lower) << ',' << detail::format_double(upper);
        for (std::size_t c : counts[b]) {
            out << ',' << c;
        }
        out << '\n';
    }
}

void write_atoms(std::ostream& out, const Panel& p, TailKind kind, double q) {
    out << "ticker,location,weight\n";
    for (std::size_t i = 0; i < p.instruments(); ++i) {
        const auto m = restrict(p.row(i), kind, q);
        for (const auto& a : m.atoms()) {
            out << p.tickers()[i] << ',' << detail::format_double(a.location) << ','
                << detail::format_double(a.weight) << '\n';
        }
    }
}

void write_norms(std::ostream& out, const NormSeries& s) {
    out << "date,norm\n";
    for (std::size_t t = 0; t < s.dates.size(); ++t) {
        out << format_date(s.dates[t]) << ',' << detail::format_double(s.values[t]) << '\n';
    }
}

void write_dendrogram(BundleWriter& w, const std::string& stem, const Dendrogram& d) {
    w.text(stem + ".nwk", to_newick(d) + "\n");
    w.text(stem + ".json", to_merge_json(d));
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- fetch

Fetcher::Fetcher(FetchOptions options) : options_(std::move(options)) {
    if (options_.cache_dir.empty()) {
        throw Error(ErrorCode::config, "fetching needs a cache directory");
    }
    if (options_.max_attempts < 1) {
        throw Error(ErrorCode::config, "max_attempts must be positive");
    }
}

std::filesystem::path Fetcher::cache_path(const std::string& ticker, DateRange range) const {
    return options_.cache_dir /
           (sanitize(ticker) + "_" + format_date(range.start) + "_" + format_date(range.end) + ".csv");
}

// ---------------------------------------------------------------- study

StudySummary run_study(const StudyConfig& cfg) {
    cfg.validate();
    StudySummary summary;

    // Resolve inputs.
    struct Input {
        std::string ticker;
        std::filesystem::path path;
    };
    std::vector<Input> inputs;
    if (!cfg.data_dir.empty()) {
        if (!std::filesystem::is_directory(cfg.data_dir)) {
            throw Error(ErrorCode::io, "data directory not found: " + cfg.data_dir.string());
        }
        if (cfg.tickers.empty()) {
            std::vector<std::filesystem::path> files;
            for (const auto& entry : std::filesystem::directory_iterator(cfg.data_dir)) {
                if (entry.is_regular_file() && entry.path().extension() == ".csv") {
                    files.push_back(entry.path());
                }
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                inputs.push_back({f.stem().string(), f});
            }
        } else {
            for (const auto& t : cfg.tickers) {
                inputs.push_back({t, cfg.data_dir / (t + ".csv")});
            }
        }
    } else {
        FetchOptions fo;
        fo.url_template = cfg.endpoint;
        fo.cache_dir = cfg.cache_dir / "ohlc";
        fo.max_attempts = cfg.fetch_max_attempts;
        fo.min_interval = std::chrono::milliseconds(cfg.fetch_min_interval_ms);
        fo.backoff = std::chrono::milliseconds(cfg.fetch_backoff_ms);
        fo.payload_schema = cfg.schema;
        Fetcher fetcher(fo);
        const DateRange range{day_before(std::min(cfg.pre.start, cfg.post.start)),
                              std::max(cfg.pre.end, cfg.post.end)};
        for (const auto& t : cfg.tickers) {
            try {
                inputs.push_back({t, fetcher.fetch(t, range).path});
            } catch (const Error& e) {
                summary.excluded.push_back({t, std::string(e.category()) + ": " + e.what()});
            }
        }
    }

    // Ingest and derive; any per-instrument failure excludes that instrument.
    OhlcSchema schema = cfg.schema;
    if (cfg.data_dir.empty()) {
        schema = OhlcSchema{};  // the fetch cache is canonical
    }
    std::vector<ValueSeries> returns;
    std::vector<ValueSeries> variances;
    json dropped = json::object();
    for (const auto& in : inputs) {
        try {
            const auto ohlc = read_ohlc_file(in.path, schema, in.ticker);
            auto r = log_returns(ohlc);
            auto v = parkinson_variance(ohlc);
            for (const auto& w : {cfg.pre, cfg.post}) {
                (void)slice_period(r, w.start, w.end);
                (void)slice_period(v, w.start, w.end);
            }
            dropped[in.ticker] = ohlc.dropped_rows();
            returns.push_back(std::move(r));
            variances.push_back(std::move(v));
        } catch (const Error& e) {
            summary.excluded.push_back({in.ticker, std::string(e.category()) + ": " + e.what()});
        }
    }
    if (returns.size() < 2) {
        throw Error(ErrorCode::insufficient_data,
                    "fewer than 2 instruments survived ingestion (" + std::to_string(returns.size()) + ")");
    }
    const Panel returns_panel = align_panel(returns);
    const Panel variance_panel = align_panel(variances);
    summary.tickers = returns_panel.tickers();

    BundleWriter w(cfg.output_dir);
    std::vector<std::string> degenerate;

    w.write("norms/returns_norm.csv", [&](std::ostream& o) { write_norms(o, frobenius_vector_series(returns_panel)); });
    w.write("norms/variance_norm.csv",
            [&](std::ostream& o) { write_norms(o, frobenius_vector_series(variance_panel)); });

    std::vector<WindowResult> windows;
    for (const auto& [name, range] : {std::pair{std::string("pre"), cfg.pre}, std::pair{std::string("post"), cfg.post}}) {
        Panel r = slice_period(returns_panel, range.start, range.end);
        Panel v = slice_period(variance_panel, range.start, range.end);
        windows.push_back(WindowResult{name, std::move(r), std::move(v), {}, {}, {}, {}, {}, {}, {}, {}, {}});
    }

    int t_max = cfg.detector.burn_in + 1;
    for (const auto& win : windows) {
        t_max = std::max({t_max, static_cast<int>(win.returns.length()), static_cast<int>(win.variance.length())});
    }
    const auto threshold_dir = cfg.cache_dir.empty() ? std::filesystem::path{} : cfg.cache_dir / "thresholds";
    const ThresholdTable thresholds = calibrate_thresholds_cached(cfg.detector, t_max, threshold_dir);

    json means_summary = json::array();
    for (auto& win : windows) {
        const std::string dir = win.name + "/";
        win.d_er = extremity_distance_matrix(win.returns, TailKind::two_sided, cfg.two_sided_fraction);
        win.d_ev = extremity_distance_matrix(win.variance, TailKind::upper, cfg.upper_fraction);

        std::vector<BreakSet> br;
        std::vector<BreakSet> bv;
        for (std::size_t i = 0; i < win.returns.instruments(); ++i) {
            br.push_back(sequential_detect(win.returns.row(i), cfg.detector, thresholds, win.returns.tickers()[i]));
            bv.push_back(sequential_detect(win.variance.row(i), cfg.detector, thresholds, win.variance.tickers()[i]));
        }
        win.d_br = break_distance_matrix(br);
        win.d_bv = break_distance_matrix(bv);

        win.a_er = affinity_or_ones(win.d_er, win.name + "/ER", degenerate);
        win.a_ev = affinity_or_ones(win.d_ev, win.name + "/EV", degenerate);
        win.a_br = affinity_or_ones(win.d_br, win.name + "/BR", degenerate);
        win.a_bv = affinity_or_ones(win.d_bv, win.name + "/BV", degenerate);

        const std::pair<const char*, const LabeledMatrix*> mats[] = {
            {"ER", &win.d_er}, {"EV", &win.d_ev}, {"BR", &win.d_br}, {"BV", &win.d_bv}};
        const std::pair<const char*, const LabeledMatrix*> affs[] = {
            {"ER", &win.a_er}, {"EV", &win.a_ev}, {"BR", &win.a_br}, {"BV", &win.a_bv}};
        for (const auto& [key, m] : mats) {
            w.write(dir + "distance_" + key + ".csv", [&](std::ostream& o) { write_matrix(o, *m); });
        }
        for (const auto& [key, a] : affs) {
            w.write(dir + "affinity_" + key + ".csv", [&](std::ostream& o) { write_matrix(o, *a); });
            write_dendrogram(w, dir + "dendrogram_affinity_" + key, hcluster_affinity(*a, cfg.linkage));
        }
        w.write(dir + "breaks_returns.csv", [&](std::ostream& o) { write_break_sets(o, br); });
        w.write(dir + "breaks_variance.csv", [&](std::ostream& o) { write_break_sets(o, bv); });
        w.write(dir + "tails_returns.csv",
                [&](std::ostream& o) { write_atoms(o, win.returns, TailKind::two_sided, cfg.two_sided_fraction); });
        w.write(dir + "tails_variance.csv",
                [&](std::ostream& o) { write_atoms(o, win.variance, TailKind::upper, cfg.upper_fraction); });
        w.write(dir + "histogram_returns.csv", [&](std::ostream& o) { write_histogram(o, win.returns, 40); });
        w.write(dir + "histogram_variance.csv", [&](std::ostream& o) { write_histogram(o, win.variance, 40); });

        std::size_t negative = 0;
        w.write(dir + "restricted_means.csv", [&](std::ostream& o) {
            o << "ticker,mean\n";
            for (std::size_t i = 0; i < win.returns.instruments(); ++i) {
                const double m =
                    restricted_mean(restrict_two_sided(win.returns.row(i), cfg.two_sided_fraction));
                win.means.push_back(m);
                negative += m < 0.0 ? 1 : 0;
                o << win.returns.tickers()[i] << ',' << detail::format_double(m) << '\n';
            }
        });
        const auto total = win.means.size();
        means_summary.push_back({{"window", win.name},
                                 {"negative", negative},
                                 {"total", total},
                                 {"negative_percent", 100.0 * static_cast<double>(negative) / static_cast<double>(total)}});
    }

    w.write("means_summary.csv", [&](std::ostream& o) {
        o << "window,negative,total,negative_percent\n";
        for (const auto& m : means_summary) {
            o << m["window"].get<std::string>() << ',' << m["negative"].get<std::size_t>() << ','
              << m["total"].get<std::size_t>() << ','
              << detail::format_double(m["negative_percent"].get<double>()) << '\n';
        }
    });

    w.write("frobenius.csv", [&](std::ostream& o) {
        o << "matrix,window,norm\n";
        for (const auto& win : windows) {
            o << "ER," << win.name << ',' << detail::format_double(frobenius_matrix(win.d_er)) << '\n';
            o << "EV," << win.name << ',' << detail::format_double(frobenius_matrix(win.d_ev)) << '\n';
            o << "BR," << win.name << ',' << detail::format_double(frobenius_matrix(win.d_br)) << '\n';
            o << "BV," << win.name << ',' << detail::format_double(frobenius_matrix(win.d_bv)) << '\n';
        }
    });

    const WindowResult& pre = windows[0];
    const WindowResult& post = windows[1];
    const std::vector<InconsistencyMatrix> incs = {
        behaviour_inconsistency(pre.a_er, pre.a_br, "pre/ER", "pre/BR"),
        behaviour_inconsistency(pre.a_ev, pre.a_bv, "pre/EV", "pre/BV"),
        behaviour_inconsistency(post.a_er, post.a_br, "post/ER", "post/BR"),
        behaviour_inconsistency(post.a_ev, post.a_bv, "post/EV", "post/BV"),
        time_inconsistency(pre.a_er, post.a_er, "pre/ER", "post/ER"),
        time_inconsistency(pre.a_ev, post.a_ev, "pre/EV", "post/EV"),
        time_inconsistency(pre.a_br, post.a_br, "pre/BR", "post/BR"),
        time_inconsistency(pre.a_bv, post.a_bv, "pre/BV", "post/BV"),
    };
    const char* inc_names[] = {"behaviour_pre_R", "behaviour_pre_V", "behaviour_post_R", "behaviour_post_V",
                               "time_ER",         "time_EV",         "time_BR",          "time_BV"};
    json inc_meta = json::array();
    for (std::size_t k = 0; k < incs.size(); ++k) {
        const std::string name = inc_names[k];
        w.write("inconsistency/" + name + ".csv", [&](std::ostream& o) { write_matrix(o, incs[k].matrix); });
        write_dendrogram(w, "inconsistency/dendrogram_" + name, hcluster_inconsistency(incs[k], cfg.linkage));
        const auto ranking = anomaly_scores(incs[k].matrix);
        w.write("anomaly/" + name + ".csv", [&](std::ostream& o) { write_ranking(o, ranking); });
        w.write("anomaly/" + name + "_top.csv",
                [&](std::ostream& o) { write_ranking(o, top_k(ranking, static_cast<std::size_t>(cfg.top_k))); });
        inc_meta.push_back({{"name", name},
                            {"kind", incs[k].kind == InconsistencyKind::behaviour ? "behaviour" : "time"},
                            {"minuend", incs[k].minuend},
                            {"subtrahend", incs[k].subtrahend}});
    }

    json manifest;
    manifest["format"] = kBundleVersion;
    manifest["config"] = config_json(cfg);
    manifest["instruments"] = summary.tickers;
    json excluded = json::array();
    for (const auto& ex : summary.excluded) {
        excluded.push_back({{"ticker", ex.ticker}, {"reason", ex.reason}});
    }
    manifest["excluded"] = excluded;
    manifest["dropped_rows"] = dropped;
    json lengths;
    for (const auto& win : windows) {
        lengths[win.name] = {{"returns", win.returns.length()},
                             {"variance", win.variance.length()},
                             {"first_date", format_date(win.returns.dates().front())},
                             {"last_date", format_date(win.returns.dates().back())}};
    }
    manifest["windows"] = lengths;
    manifest["full_span"] = {{"returns", returns_panel.length()}, {"variance", variance_panel.length()}};
    manifest["thresholds"] = {{"t_max", thresholds.t_max()},
                              {"alpha", 1.0 / cfg.detector.arl0},
                              {"cache_file", threshold_dir.empty() ? std::string()
                                                                   : threshold_cache_path(cfg.detector, t_max, threshold_dir)
                                                                         .filename()
                                                                         .string()}};
    manifest["conventions"] = {
        {"missing_rows", "rows with an empty close/high/low field are dropped; panels use the date intersection"},
        {"returns_dating", "a return is dated at the later of its two closes"},
        {"tail_count", "k = floor(q*n) order statistics per tail, uniform weight q/k, stable tie order"},
        {"restricted_mean", "conditional mean: sum(w*x)/total_mass"},
        {"change_statistic", "Mann-Whitney with midranks, no tie correction, splits k=2..n-2"},
        {"alarm", "alarm when D_t > h_t; break at argmax split (smallest k on ties); restart after the break"},
        {"threshold_extension", "h_t for t > t_max reuses h_{t_max}"},
        {"empty_break_sets", "D(empty,empty)=0, D(S,empty)=0.5"},
        {"vector_norm", "Euclidean (square root of sum of squares)"},
        {"affinity_degenerate", "all-zero distance matrix maps to an all-ones affinity"},
        {"affinity_dissimilarity", "1 - affinity"},
        {"inconsistency_dissimilarity", "max(inconsistency) - inconsistency"},
        {"anomaly_score", "a_j = sum_i |INC_ij|, ties by label"},
    };
    manifest["degenerate_affinities"] = degenerate;
    manifest["inconsistency"] = inc_meta;
    manifest["restricted_mean_signs"] = means_summary;

    // The manifest lists every file, itself included.
    w.text("manifest.json", "");
    auto files = w.files();
    manifest["files"] = files;
    w.text("manifest.json", manifest.dump(2) + "\n");
    summary.files = files;
    return summary;
}

// ---------------------------------------------------------------- report

namespace {

std::vector<std::vector<std::string>> read_table(const std::filesystem::path& root, const std::string& rel) {
    const auto path = root / rel;
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::missing_artifact, "bundle is missing " + rel);
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (!detail::trim(line).empty()) {
            rows.push_back(detail::split(std::string(detail::trim(line)), ','));
        }
    }
    return rows;
}

}  // namespace

std::string render_report(const std::filesystem::path& bundle_dir) {
    if (!std::filesystem::exists(bundle_dir / "manifest.json")) {
        throw Error(ErrorCode::missing_artifact, "bundle is missing manifest.json");
    }
    json manifest;
    try {
        manifest = json::parse(read_text(bundle_dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, std::string("manifest.json: ") + e.what());
    }

    std::ostringstream out;
    out << "# Extreme and erratic behaviour report\n\n";
    out << "Instruments (" << manifest["instruments"].size() << "): ";
    for (std::size_t i = 0; i < manifest["instruments"].size(); ++i) {
        out << (i ? ", " : "") << manifest["instruments"][i].get<std::string>();
    }
    out << "\n\n";

    const auto norms = read_table(bundle_dir, "frobenius.csv");
    std::map<std::pair<std::string, std::string>, std::string> norm_of;
    for (const auto& row : norms) {
        if (row.size() == 3) {
            norm_of[{row[0], row[1]}] = row[2];
        }
    }
    out << "## Distance-matrix Frobenius norms\n\n";
    out << "| Matrix | pre | post | post/pre |\n|---|---|---|---|\n";
    for (const char* m : {"ER", "EV", "BR", "BV"}) {
        const auto pre_it = norm_of.find({m, "pre"});
        const auto post_it = norm_of.find({m, "post"});
        if (pre_it == norm_of.end() || post_it == norm_of.end()) {
            throw Error(ErrorCode::missing_artifact, std::string("frobenius.csv lacks the ") + m + " norms");
        }
        double pre = 0.0;
        double post = 0.0;
        detail::parse_double(pre_it->second, pre);
        detail::parse_double(post_it->second, post);
        out << "| D^" << m << " | " << pre_it->second << " | " << post_it->second << " | "
            << (pre > 0.0 ? detail::format_double(post / pre) : std::string("n/a")) << " |\n";
    }

    out << "\n## Top anomalies per inconsistency matrix\n";
    for (const char* name : {"behaviour_pre_R", "behaviour_pre_V", "behaviour_post_R", "behaviour_post_V",
                             "time_ER", "time_EV", "time_BR", "time_BV"}) {
        const auto rows = read_table(bundle_dir, std::string("anomaly/") + name + "_top.csv");
        out << "\n### " << name << "\n\n";
        if (rows.empty()) {
            out << "none\n";
            continue;
        }
        int rank = 1;
        for (const auto& row : rows) {
            out << rank++ << ". " << row.at(0) << " (" << (row.size() > 1 ? row[1] : "") << ")\n";
        }
    }

    out << "\n## Restricted-mean signs (two-sided return tails)\n\n";
    out << "| Window | negative | total | negative % |\n|---|---|---|---|\n";
    for (const auto& row : read_table(bundle_dir, "means_summary.csv")) {
        if (row.size() == 4) {
            out << "| " << row[0] << " | " << row[1] << " | " << row[2] << " | " << row[3] << " |\n";
        }
    }

    out << "\n## Exclusions\n\n";
    if (manifest["excluded"].empty()) {
        out << "none\n";
    } else {
        for (const auto& ex : manifest["excluded"]) {
            out << "- " << ex["ticker"].get<std::string>() << ": " << ex["reason"].get<std::string>() << "\n";
        }
    }
    return out.str();
}

}  // namespace tailbreak
