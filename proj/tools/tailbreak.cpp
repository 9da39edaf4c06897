#include <tailbreak/tailbreak.h>

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Failure {
    tb_status status;
};

void check(tb_status s) {
    if (s != TB_OK) {
        throw Failure{s};
    }
}

template <typename T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};

using Series = std::unique_ptr<tb_series, Deleter<tb_series, tb_series_free>>;
using Ohlc = std::unique_ptr<tb_ohlc, Deleter<tb_ohlc, tb_ohlc_free>>;
using PanelPtr = std::unique_ptr<tb_panel, Deleter<tb_panel, tb_panel_free>>;
using Matrix = std::unique_ptr<tb_matrix, Deleter<tb_matrix, tb_matrix_free>>;
using Thresholds = std::unique_ptr<tb_thresholds, Deleter<tb_thresholds, tb_thresholds_free>>;
using BreakSet = std::unique_ptr<tb_breakset, Deleter<tb_breakset, tb_breakset_free>>;
using Dendro = std::unique_ptr<tb_dendrogram, Deleter<tb_dendrogram, tb_dendrogram_free>>;
using Config = std::unique_ptr<tb_study_config, Deleter<tb_study_config, tb_study_config_free>>;

std::string take(char* s) {
    std::string out = s ? s : "";
    tb_string_free(s);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        std::fprintf(stderr, "error[io]: cannot write %s\n", path.c_str());
        throw Failure{TB_ERR_IO};
    }
}

struct DetectorFlags {
    tb_detector_config cfg{};
    std::string cache_dir;

    void add(CLI::App* app) {
        tb_detector_config_default(&cfg);
        app->add_option("--arl0", cfg.arl0, "Target in-control average run length")->capture_default_str();
        app->add_option("--burn-in", cfg.burn_in, "Observations before monitoring starts")->capture_default_str();
        app->add_option("--mc", cfg.mc_replications, "Monte-Carlo null streams")->capture_default_str();
        app->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
        app->add_option("--cache-dir", cache_dir, "Threshold cache directory")->envname("TAILBREAK_CACHE_DIR");
    }
};

tb_linkage parse_linkage(const std::string& name) {
    if (name == "single") return TB_LINKAGE_SINGLE;
    if (name == "complete") return TB_LINKAGE_COMPLETE;
    return TB_LINKAGE_AVERAGE;
}

std::vector<Series> read_all(const std::vector<std::string>& paths, tb_series_kind kind) {
    std::vector<Series> list;
    for (const auto& p : paths) {
        tb_series* s = nullptr;
        check(tb_series_read(p.c_str(), kind, &s));
        list.emplace_back(s);
    }
    return list;
}

std::vector<const tb_series*> raw(const std::vector<Series>& list) {
    std::vector<const tb_series*> out;
    for (const auto& s : list) {
        out.push_back(s.get());
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tail and structural-break similarity analysis for asset collections"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tb_version()));

    // fetch
    auto* fetch = app.add_subcommand("fetch", "Download OHLC histories into the cache");
    std::string endpoint;
    std::vector<std::string> fetch_tickers;
    std::string fetch_start;
    std::string fetch_end;
    std::string fetch_cache;
    int max_attempts = 3;
    int min_interval_ms = 1000;
    int backoff_ms = 500;
    fetch->add_option("--endpoint", endpoint, "URL template with {ticker}, {start}, {end}")->required();
    fetch->add_option("--ticker", fetch_tickers, "Ticker symbol (repeatable)")->required();
    fetch->add_option("--start", fetch_start, "First date")->required();
    fetch->add_option("--end", fetch_end, "Last date")->required();
    fetch->add_option("--cache-dir", fetch_cache, "Cache directory")->envname("TAILBREAK_CACHE_DIR")->required();
    fetch->add_option("--max-attempts", max_attempts)->capture_default_str();
    fetch->add_option("--min-interval-ms", min_interval_ms)->capture_default_str();
    fetch->add_option("--backoff-ms", backoff_ms)->capture_default_str();

    // derive
    auto* derive = app.add_subcommand("derive", "Compute log returns or Parkinson variance from an OHLC file");
    std::string derive_input;
    std::string derive_out;
    std::string derive_kind = "returns";
    std::string derive_ticker;
    std::string derive_start;
    std::string derive_end;
    std::string col_date = "date";
    std::string col_close = "close";
    std::string col_high = "high";
    std::string col_low = "low";
    char delimiter = ',';
    derive->add_option("--input", derive_input, "OHLC file")->required()->check(CLI::ExistingFile);
    derive->add_option("--out", derive_out, "Output series file (default stdout)");
    derive->add_option("--kind", derive_kind)->check(CLI::IsMember({"returns", "variance"}))->capture_default_str();
    derive->add_option("--ticker", derive_ticker, "Ticker label (default file stem)");
    derive->add_option("--start", derive_start, "Keep observations from this date");
    derive->add_option("--end", derive_end, "Keep observations up to this date");
    derive->add_option("--date-column", col_date)->capture_default_str();
    derive->add_option("--close-column", col_close)->capture_default_str();
    derive->add_option("--high-column", col_high)->capture_default_str();
    derive->add_option("--low-column", col_low)->capture_default_str();
    derive->add_option("--delimiter", delimiter)->capture_default_str();

    // breaks
    auto* breaks = app.add_subcommand("breaks", "Sequential change-point detection on series files");
    std::vector<std::string> breaks_input;
    std::string breaks_out;
    DetectorFlags breaks_det;
    breaks->add_option("--input", breaks_input, "Series files")->required()->check(CLI::ExistingFile);
    breaks->add_option("--out", breaks_out, "Break-set file (default stdout)");
    breaks_det.add(breaks);

    // matrices
    auto* matrices = app.add_subcommand("matrices", "Build a distance matrix and its affinity");
    std::string mat_kind;
    std::vector<std::string> mat_input;
    std::string mat_out;
    std::string mat_affinity;
    std::string mat_dendrogram;
    std::string mat_linkage = "average";
    double mat_q = 0.0;
    bool print_norm = false;
    matrices->add_option("--kind", mat_kind)
        ->required()
        ->check(CLI::IsMember({"extreme-returns", "extreme-variance", "breaks"}));
    matrices->add_option("--input", mat_input, "Series files, or one break-set file")
        ->required()
        ->check(CLI::ExistingFile);
    matrices->add_option("--out", mat_out, "Distance matrix file (default stdout)");
    matrices->add_option("--q", mat_q, "Tail fraction (default 0.05 returns, 0.10 variance)");
    matrices->add_option("--affinity-out", mat_affinity, "Write the affinity matrix here");
    matrices->add_option("--dendrogram-out", mat_dendrogram, "Prefix for .nwk and .json dendrogram of the affinity");
    matrices->add_option("--linkage", mat_linkage)
        ->check(CLI::IsMember({"average", "single", "complete"}))
        ->capture_default_str();
    matrices->add_flag("--frobenius", print_norm, "Print the Frobenius norm to stderr");

    // study
    auto* study = app.add_subcommand("study", "Run the full pre/post study and write a bundle");
    std::string study_config;
    std::string study_out;
    std::string study_cache;
    std::string study_linkage;
    std::vector<std::string> overrides;
    double s_arl0 = 0;
    int s_burn = 0;
    int s_mc = 0;
    std::uint64_t s_seed = 0;
    study->add_option("--config", study_config, "Study config (JSON)")->required()->check(CLI::ExistingFile);
    study->add_option("--out", study_out, "Bundle directory");
    study->add_option("--cache-dir", study_cache, "Cache directory")->envname("TAILBREAK_CACHE_DIR");
    auto* o_arl0 = study->add_option("--arl0", s_arl0);
    auto* o_burn = study->add_option("--burn-in", s_burn);
    auto* o_mc = study->add_option("--mc", s_mc);
    auto* o_seed = study->add_option("--seed", s_seed);
    study->add_option("--linkage", study_linkage)->check(CLI::IsMember({"average", "single", "complete"}));
    study->add_option("--set", overrides, "Override a config key, e.g. tails.upper_fraction=0.1");

    // report
    auto* report = app.add_subcommand("report", "Render a markdown summary of a bundle");
    std::string report_bundle;
    std::string report_out;
    report->add_option("--bundle", report_bundle, "Bundle directory")->required();
    report->add_option("--out", report_out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error[argument]: %s\n", e.what());
        std::fprintf(stderr, "Run with --help for usage.\n");
        return TB_ERR_ARGUMENT;
    }

    try {
        if (fetch->parsed()) {
            for (const auto& t : fetch_tickers) {
                char* path = nullptr;
                int cached = 0;
                check(tb_fetch(endpoint.c_str(), t.c_str(), fetch_start.c_str(), fetch_end.c_str(),
                               fetch_cache.c_str(), max_attempts, min_interval_ms, backoff_ms, &path, &cached));
                std::cout << take(path) << (cached ? " (cached)" : "") << '\n';
            }
        } else if (derive->parsed()) {
            const tb_ohlc_schema schema{col_date.c_str(), col_close.c_str(), col_high.c_str(), col_low.c_str(),
                                        delimiter};
            const std::string ticker = derive_ticker.empty() ? fs::path(derive_input).stem().string() : derive_ticker;
            tb_ohlc* o = nullptr;
            check(tb_ohlc_read(derive_input.c_str(), &schema, ticker.c_str(), &o));
            Ohlc ohlc(o);
            tb_series* s = nullptr;
            check(derive_kind == "returns" ? tb_log_returns(ohlc.get(), &s) : tb_parkinson_variance(ohlc.get(), &s));
            Series series(s);
            if (!derive_start.empty() || !derive_end.empty()) {
                const std::string start = derive_start.empty() ? "0001-01-01" : derive_start;
                const std::string end = derive_end.empty() ? "9999-12-31" : derive_end;
                tb_series* sliced = nullptr;
                check(tb_series_slice(series.get(), start.c_str(), end.c_str(), &sliced));
                series.reset(sliced);
            }
            check(tb_series_write(series.get(), derive_out.empty() ? "/dev/stdout" : derive_out.c_str()));
        } else if (breaks->parsed()) {
            const auto list = read_all(breaks_input, TB_SERIES_GENERIC);
            int t_max = 0;
            for (const auto& s : list) {
                t_max = std::max(t_max, static_cast<int>(tb_series_length(s.get())));
            }
            tb_thresholds* th = nullptr;
            check(tb_thresholds_calibrate(&breaks_det.cfg, t_max,
                                          breaks_det.cache_dir.empty() ? nullptr : breaks_det.cache_dir.c_str(), &th));
            Thresholds thresholds(th);
            std::vector<BreakSet> sets;
            std::vector<const tb_breakset*> raw_sets;
            for (const auto& s : list) {
                tb_breakset* b = nullptr;
                check(tb_sequential_detect(tb_series_values(s.get()), tb_series_length(s.get()), &breaks_det.cfg,
                                           thresholds.get(), tb_series_ticker(s.get()), &b));
                sets.emplace_back(b);
                raw_sets.push_back(b);
            }
            check(tb_breaksets_write(raw_sets.data(), raw_sets.size(),
                                     breaks_out.empty() ? "/dev/stdout" : breaks_out.c_str()));
        } else if (matrices->parsed()) {
            tb_matrix* m = nullptr;
            if (mat_kind == "breaks") {
                if (mat_input.size() != 1) {
                    std::fprintf(stderr, "error[argument]: --kind breaks takes exactly one break-set file\n");
                    return TB_ERR_ARGUMENT;
                }
                tb_breakset** sets = nullptr;
                size_t count = 0;
                check(tb_breaksets_read(mat_input[0].c_str(), &sets, &count));
                const tb_status st = tb_break_matrix(sets, count, &m);
                tb_breaksets_free(sets, count);
                check(st);
            } else {
                const bool returns = mat_kind == "extreme-returns";
                const auto list = read_all(mat_input, returns ? TB_SERIES_RETURNS : TB_SERIES_VARIANCE);
                const auto ptrs = raw(list);
                tb_panel* p = nullptr;
                check(tb_panel_align(ptrs.data(), ptrs.size(), &p));
                PanelPtr panel(p);
                const double q = mat_q > 0.0 ? mat_q : (returns ? 0.05 : 0.10);
                check(tb_extremity_matrix(panel.get(), returns ? TB_TAIL_TWO_SIDED : TB_TAIL_UPPER, q, &m));
            }
            Matrix distance(m);
            check(tb_matrix_write(distance.get(), mat_out.empty() ? "/dev/stdout" : mat_out.c_str()));
            if (print_norm) {
                double norm = 0.0;
                check(tb_frobenius_matrix(distance.get(), &norm));
                std::fprintf(stderr, "frobenius %.17g\n", norm);
            }
            if (!mat_affinity.empty() || !mat_dendrogram.empty()) {
                tb_matrix* a = nullptr;
                check(tb_affinity(distance.get(), &a));
                Matrix aff(a);
                if (!mat_affinity.empty()) {
                    check(tb_matrix_write(aff.get(), mat_affinity.c_str()));
                }
                if (!mat_dendrogram.empty()) {
                    tb_dendrogram* d = nullptr;
                    check(tb_hcluster(aff.get(), TB_ROLE_AFFINITY, parse_linkage(mat_linkage), &d));
                    Dendro dendro(d);
                    char* text = nullptr;
                    check(tb_dendrogram_newick(dendro.get(), &text));
                    write_text(mat_dendrogram + ".nwk", take(text) + "\n");
                    check(tb_dendrogram_json(dendro.get(), &text));
                    write_text(mat_dendrogram + ".json", take(text));
                }
            }
        } else if (study->parsed()) {
            tb_study_config* c = nullptr;
            check(tb_study_config_load(study_config.c_str(), &c));
            Config cfg(c);
            auto set = [&](const std::string& key, const std::string& value) {
                check(tb_study_config_set(cfg.get(), key.c_str(), value.c_str()));
            };
            auto quoted = [](const std::string& s) {
                std::string out = "\"";
                for (char ch : s) {
                    if (ch == '"' || ch == '\\') out += '\\';
                    out += ch;
                }
                return out + "\"";
            };
            for (const auto& kv : overrides) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos || eq == 0) {
                    std::fprintf(stderr, "error[argument]: --set expects key=value, got '%s'\n", kv.c_str());
                    return TB_ERR_ARGUMENT;
                }
                set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (!study_out.empty()) set("output_dir", quoted(study_out));
            if (!study_cache.empty()) set("cache_dir", quoted(study_cache));
            if (!study_linkage.empty()) set("clustering.linkage", quoted(study_linkage));
            if (*o_arl0) set("detector.arl0", std::to_string(s_arl0));
            if (*o_burn) set("detector.burn_in", std::to_string(s_burn));
            if (*o_mc) set("detector.mc_replications", std::to_string(s_mc));
            if (*o_seed) set("detector.seed", std::to_string(s_seed));
            char* summary = nullptr;
            check(tb_study_run(cfg.get(), &summary));
            std::cout << take(summary);
        } else if (report->parsed()) {
            char* text = nullptr;
            check(tb_report(report_bundle.c_str(), &text));
            write_text(report_out, take(text));
        }
    } catch (const Failure& f) {
        if (f.status != TB_ERR_IO || tb_last_error()[0] != '\0') {
            std::fprintf(stderr, "error[%s]: %s\n", tb_status_name(f.status), tb_last_error());
        }
        return static_cast<int>(f.status);
    }
    return 0;
}
