#include "tailbreak/tailbreak.h"

#include "tailbreak/changepoints.hpp"
#include "tailbreak/error.hpp"
#include "tailbreak/market_data.hpp"
#include "tailbreak/setdist.hpp"
#include "tailbreak/structure.hpp"
#include "tailbreak/study.hpp"
#include "tailbreak/tails.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <new>
#include <sstream>

using namespace tailbreak;

struct tb_ohlc {
    OhlcSeries value;
};
struct tb_series {
    ValueSeries value;
};
struct tb_panel {
    Panel value;
};
struct tb_measure {
    RestrictedMeasure value;
};
struct tb_thresholds {
    ThresholdTable value;
};
struct tb_breakset {
    BreakSet value;
};
struct tb_matrix {
    LabeledMatrix value;
};
struct tb_dendrogram {
    Dendrogram value;
};
struct tb_study_config {
    StudyConfig value;
};

namespace {

thread_local std::string last_error;

template <typename F>
tb_status guard(F&& body) noexcept {
    try {
        body();
        last_error.clear();
        return TB_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return static_cast<tb_status>(e.code());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
    } catch (const std::exception& e) {
        last_error = e.what();
    } catch (...) {
        last_error = "unknown error";
    }
    return TB_ERR_INTERNAL;
}

template <typename T>
void require(const T* p, const char* what) {
    if (p == nullptr) {
        throw Error(ErrorCode::argument, std::string(what) + " must not be NULL");
    }
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) {
        throw std::bad_alloc();
    }
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

OhlcSchema to_schema(const tb_ohlc_schema* s) {
    OhlcSchema schema;
    if (s == nullptr) {
        return schema;
    }
    if (s->date) schema.date = s->date;
    if (s->close) schema.close = s->close;
    if (s->high) schema.high = s->high;
    if (s->low) schema.low = s->low;
    if (s->delimiter) schema.delimiter = s->delimiter;
    return schema;
}

DetectorConfig to_config(const tb_detector_config* c) {
    require(c, "detector config");
    DetectorConfig cfg;
    cfg.arl0 = c->arl0;
    cfg.burn_in = c->burn_in;
    cfg.mc_replications = c->mc_replications;
    cfg.rng_seed = c->seed;
    return cfg;
}

SeriesKind to_kind(tb_series_kind k) {
    switch (k) {
        case TB_SERIES_RETURNS: return SeriesKind::returns;
        case TB_SERIES_VARIANCE: return SeriesKind::variance;
        case TB_SERIES_GENERIC: break;
    }
    return SeriesKind::generic;
}

TailKind to_tail(tb_tail_kind k) {
    return k == TB_TAIL_UPPER ? TailKind::upper : TailKind::two_sided;
}

Linkage to_linkage(tb_linkage l) {
    switch (l) {
        case TB_LINKAGE_SINGLE: return Linkage::single;
        case TB_LINKAGE_COMPLETE: return Linkage::complete;
        case TB_LINKAGE_AVERAGE: break;
    }
    return Linkage::average;
}

std::ofstream open_out(const char* path) {
    require(path, "path");
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, std::string("cannot write ") + path);
    }
    return out;
}

std::ifstream open_in(const char* path) {
    require(path, "path");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, std::string("cannot open ") + path);
    }
    return in;
}

}  // namespace

extern "C" {

const char* tb_version(void) { return "1.0.0"; }

const char* tb_status_name(tb_status status) {
    if (status == TB_OK) {
        return "ok";
    }
    return error_category(static_cast<ErrorCode>(status)).data();
}

const char* tb_last_error(void) { return last_error.c_str(); }

void tb_string_free(char* s) { std::free(s); }

// ---- market data

tb_status tb_ohlc_read(const char* path, const tb_ohlc_schema* schema, const char* ticker, tb_ohlc** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new tb_ohlc{read_ohlc_file(path, to_schema(schema), ticker ? ticker : "")};
    });
}

tb_status tb_ohlc_parse(const char* text, size_t length, const tb_ohlc_schema* schema, const char* ticker,
                        tb_ohlc** out) {
    return guard([&] {
        require(text, "text");
        require(out, "out");
        std::istringstream in(std::string(text, length));
        *out = new tb_ohlc{parse_ohlc(in, to_schema(schema), ticker ? ticker : "")};
    });
}

size_t tb_ohlc_length(const tb_ohlc* s) { return s ? s->value.size() : 0; }
const char* tb_ohlc_ticker(const tb_ohlc* s) { return s ? s->value.ticker().c_str() : ""; }
void tb_ohlc_free(tb_ohlc* s) { delete s; }

tb_status tb_log_returns(const tb_ohlc* s, tb_series** out) {
    return guard([&] {
        require(s, "series");
        require(out, "out");
        *out = new tb_series{log_returns(s->value)};
    });
}

tb_status tb_parkinson_variance(const tb_ohlc* s, tb_series** out) {
    return guard([&] {
        require(s, "series");
        require(out, "out");
        *out = new tb_series{parkinson_variance(s->value)};
    });
}

tb_status tb_series_slice(const tb_series* s, const char* start, const char* end, tb_series** out) {
    return guard([&] {
        require(s, "series");
        require(start, "start");
        require(end, "end");
        require(out, "out");
        *out = new tb_series{slice_period(s->value, parse_date(start), parse_date(end))};
    });
}

tb_status tb_series_read(const char* path, tb_series_kind kind, tb_series** out) {
    return guard([&] {
        require(out, "out");
        auto in = open_in(path);
        *out = new tb_series{read_series(in, to_kind(kind))};
    });
}

tb_status tb_series_write(const tb_series* s, const char* path) {
    return guard([&] {
        require(s, "series");
        auto out = open_out(path);
        write_series(out, s->value);
    });
}

size_t tb_series_length(const tb_series* s) { return s ? s->value.size() : 0; }
const double* tb_series_values(const tb_series* s) { return s ? s->value.values().data() : nullptr; }
const char* tb_series_ticker(const tb_series* s) { return s ? s->value.ticker().c_str() : ""; }

tb_status tb_series_date(const tb_series* s, size_t i, char* buf, size_t buf_size) {
    return guard([&] {
        require(s, "series");
        require(buf, "buf");
        if (i >= s->value.size()) {
            throw Error(ErrorCode::argument, "date index out of range");
        }
        const auto text = format_date(s->value.dates()[i]);
        if (buf_size <= text.size()) {
            throw Error(ErrorCode::argument, "date buffer too small");
        }
        std::memcpy(buf, text.c_str(), text.size() + 1);
    });
}

void tb_series_free(tb_series* s) { delete s; }

tb_status tb_panel_align(const tb_series* const* series, size_t count, tb_panel** out) {
    return guard([&] {
        require(series, "series");
        require(out, "out");
        std::vector<ValueSeries> list;
        for (size_t i = 0; i < count; ++i) {
            require(series[i], "series element");
            list.push_back(series[i]->value);
        }
        *out = new tb_panel{align_panel(list)};
    });
}

tb_status tb_panel_slice(const tb_panel* p, const char* start, const char* end, tb_panel** out) {
    return guard([&] {
        require(p, "panel");
        require(start, "start");
        require(end, "end");
        require(out, "out");
        *out = new tb_panel{slice_period(p->value, parse_date(start), parse_date(end))};
    });
}

size_t tb_panel_instruments(const tb_panel* p) { return p ? p->value.instruments() : 0; }
size_t tb_panel_length(const tb_panel* p) { return p ? p->value.length() : 0; }

const double* tb_panel_row(const tb_panel* p, size_t i) {
    if (p == nullptr || i >= p->value.instruments()) {
        return nullptr;
    }
    return p->value.row(i).data();
}

const char* tb_panel_ticker(const tb_panel* p, size_t i) {
    if (p == nullptr || i >= p->value.instruments()) {
        return nullptr;
    }
    return p->value.tickers()[i].c_str();
}

tb_status tb_panel_write(const tb_panel* p, const char* path) {
    return guard([&] {
        require(p, "panel");
        auto out = open_out(path);
        write_panel(out, p->value);
    });
}

void tb_panel_free(tb_panel* p) { delete p; }

// ---- tails

tb_status tb_restrict(const double* values, size_t n, tb_tail_kind kind, double q, tb_measure** out) {
    return guard([&] {
        require(values, "values");
        require(out, "out");
        *out = new tb_measure{restrict(std::span<const double>(values, n), to_tail(kind), q)};
    });
}

size_t tb_measure_atom_count(const tb_measure* m) { return m ? m->value.atoms().size() : 0; }

tb_status tb_measure_atom(const tb_measure* m, size_t i, double* location, double* weight) {
    return guard([&] {
        require(m, "measure");
        if (i >= m->value.atoms().size()) {
            throw Error(ErrorCode::argument, "atom index out of range");
        }
        if (location) *location = m->value.atoms()[i].location;
        if (weight) *weight = m->value.atoms()[i].weight;
    });
}

double tb_measure_mass(const tb_measure* m) { return m ? m->value.total_mass() : 0.0; }

tb_status tb_measure_write(const tb_measure* m, const char* path) {
    return guard([&] {
        require(m, "measure");
        auto out = open_out(path);
        write_measure(out, m->value);
    });
}

tb_status tb_wasserstein1(const tb_measure* a, const tb_measure* b, double* out) {
    return guard([&] {
        require(a, "a");
        require(b, "b");
        require(out, "out");
        *out = wasserstein1(a->value, b->value);
    });
}

tb_status tb_restricted_mean(const tb_measure* m, double* out) {
    return guard([&] {
        require(m, "measure");
        require(out, "out");
        *out = restricted_mean(m->value);
    });
}

void tb_measure_free(tb_measure* m) { delete m; }

// ---- change points

void tb_detector_config_default(tb_detector_config* cfg) {
    if (cfg == nullptr) {
        return;
    }
    const DetectorConfig d;
    cfg->arl0 = d.arl0;
    cfg->burn_in = d.burn_in;
    cfg->mc_replications = d.mc_replications;
    cfg->seed = d.rng_seed;
}

tb_status tb_mann_whitney(const double* x, size_t n, int k, double* out) {
    return guard([&] {
        require(x, "x");
        require(out, "out");
        *out = mann_whitney_statistic(std::span<const double>(x, n), k);
    });
}

tb_status tb_batch_detect(const double* x, size_t n, double alpha, const tb_detector_config* cfg, int* change,
                          double* statistic, double* threshold) {
    return guard([&] {
        require(x, "x");
        const auto r = batch_detect(std::span<const double>(x, n), alpha, to_config(cfg));
        if (change) *change = r.change.value_or(0);
        if (statistic) *statistic = r.statistic;
        if (threshold) *threshold = r.threshold;
    });
}

tb_status tb_thresholds_calibrate(const tb_detector_config* cfg, int t_max, const char* cache_dir,
                                  tb_thresholds** out) {
    return guard([&] {
        require(out, "out");
        const auto c = to_config(cfg);
        *out = new tb_thresholds{cache_dir ? calibrate_thresholds_cached(c, t_max, cache_dir)
                                           : calibrate_thresholds(c, t_max)};
    });
}

int tb_thresholds_burn_in(const tb_thresholds* t) { return t ? t->value.burn_in() : 0; }
int tb_thresholds_t_max(const tb_thresholds* t) { return t ? t->value.t_max() : 0; }

tb_status tb_thresholds_at(const tb_thresholds* t, int time, double* out) {
    return guard([&] {
        require(t, "thresholds");
        require(out, "out");
        *out = t->value.at(time);
    });
}

void tb_thresholds_free(tb_thresholds* t) { delete t; }

tb_status tb_sequential_detect(const double* x, size_t n, const tb_detector_config* cfg,
                               const tb_thresholds* thresholds, const char* ticker, tb_breakset** out) {
    return guard([&] {
        require(x, "x");
        require(thresholds, "thresholds");
        require(out, "out");
        *out = new tb_breakset{
            sequential_detect(std::span<const double>(x, n), to_config(cfg), thresholds->value, ticker ? ticker : "")};
    });
}

tb_status tb_breakset_create(const char* ticker, const int* breaks, size_t count, int series_length,
                             tb_breakset** out) {
    return guard([&] {
        require(out, "out");
        if (count > 0) {
            require(breaks, "breaks");
        }
        if (series_length <= 0) {
            throw Error(ErrorCode::argument, "series length must be positive");
        }
        BreakSet s;
        s.ticker = ticker ? ticker : "";
        s.series_length = series_length;
        for (size_t i = 0; i < count; ++i) {
            if (breaks[i] < 1 || breaks[i] > series_length || (i > 0 && breaks[i] <= breaks[i - 1])) {
                throw Error(ErrorCode::argument, "breaks must be strictly increasing within 1..T");
            }
            s.breaks.push_back(breaks[i]);
        }
        *out = new tb_breakset{std::move(s)};
    });
}

size_t tb_breakset_count(const tb_breakset* b) { return b ? b->value.breaks.size() : 0; }
const int* tb_breakset_breaks(const tb_breakset* b) { return b ? b->value.breaks.data() : nullptr; }
int tb_breakset_series_length(const tb_breakset* b) { return b ? b->value.series_length : 0; }
const char* tb_breakset_ticker(const tb_breakset* b) { return b ? b->value.ticker.c_str() : ""; }
void tb_breakset_free(tb_breakset* b) { delete b; }

tb_status tb_breaksets_write(const tb_breakset* const* sets, size_t count, const char* path) {
    return guard([&] {
        require(sets, "sets");
        std::vector<BreakSet> list;
        for (size_t i = 0; i < count; ++i) {
            require(sets[i], "set element");
            list.push_back(sets[i]->value);
        }
        auto out = open_out(path);
        write_break_sets(out, list);
    });
}

tb_status tb_breaksets_read(const char* path, tb_breakset*** out, size_t* count) {
    return guard([&] {
        require(out, "out");
        require(count, "count");
        auto in = open_in(path);
        auto sets = read_break_sets(in);
        auto* array = new tb_breakset*[sets.size()];
        for (size_t i = 0; i < sets.size(); ++i) {
            array[i] = new tb_breakset{std::move(sets[i])};
        }
        *out = array;
        *count = sets.size();
    });
}

void tb_breaksets_free(tb_breakset** sets, size_t count) {
    if (sets == nullptr) {
        return;
    }
    for (size_t i = 0; i < count; ++i) {
        delete sets[i];
    }
    delete[] sets;
}

tb_status tb_mj_distance(const tb_breakset* a, const tb_breakset* b, double* out) {
    return guard([&] {
        require(a, "a");
        require(b, "b");
        require(out, "out");
        *out = mj_distance(a->value, b->value);
    });
}

// ---- matrices

tb_status tb_extremity_matrix(const tb_panel* p, tb_tail_kind kind, double q, tb_matrix** out) {
    return guard([&] {
        require(p, "panel");
        require(out, "out");
        *out = new tb_matrix{extremity_distance_matrix(p->value, to_tail(kind), q)};
    });
}

tb_status tb_break_matrix(const tb_breakset* const* sets, size_t count, tb_matrix** out) {
    return guard([&] {
        require(sets, "sets");
        require(out, "out");
        std::vector<BreakSet> list;
        for (size_t i = 0; i < count; ++i) {
            require(sets[i], "set element");
            list.push_back(sets[i]->value);
        }
        *out = new tb_matrix{break_distance_matrix(list)};
    });
}

tb_status tb_matrix_read(const char* path, tb_matrix** out) {
    return guard([&] {
        require(out, "out");
        auto in = open_in(path);
        *out = new tb_matrix{read_matrix(in)};
    });
}

tb_status tb_matrix_write(const tb_matrix* m, const char* path) {
    return guard([&] {
        require(m, "matrix");
        auto out = open_out(path);
        write_matrix(out, m->value);
    });
}

size_t tb_matrix_size(const tb_matrix* m) { return m ? m->value.size() : 0; }

const char* tb_matrix_label(const tb_matrix* m, size_t i) {
    if (m == nullptr || i >= m->value.size()) {
        return nullptr;
    }
    return m->value.labels()[i].c_str();
}

double tb_matrix_at(const tb_matrix* m, size_t i, size_t j) {
    if (m == nullptr || i >= m->value.size() || j >= m->value.size()) {
        return 0.0;
    }
    return m->value(i, j);
}

void tb_matrix_free(tb_matrix* m) { delete m; }

// ---- structure

tb_status tb_frobenius_matrix(const tb_matrix* m, double* out) {
    return guard([&] {
        require(m, "matrix");
        require(out, "out");
        *out = frobenius_matrix(m->value);
    });
}

tb_status tb_frobenius_panel(const tb_panel* p, double* out_values, size_t out_length) {
    return guard([&] {
        require(p, "panel");
        require(out_values, "out_values");
        if (out_length < p->value.length()) {
            throw Error(ErrorCode::argument, "output buffer shorter than the panel");
        }
        const auto norms = frobenius_vector_series(p->value);
        std::copy(norms.values.begin(), norms.values.end(), out_values);
    });
}

tb_status tb_affinity(const tb_matrix* distance, tb_matrix** out) {
    return guard([&] {
        require(distance, "distance");
        require(out, "out");
        *out = new tb_matrix{affinity(distance->value)};
    });
}

tb_status tb_inconsistency(const tb_matrix* lhs, const tb_matrix* rhs, tb_matrix** out) {
    return guard([&] {
        require(lhs, "lhs");
        require(rhs, "rhs");
        require(out, "out");
        *out = new tb_matrix{behaviour_inconsistency(lhs->value, rhs->value).matrix};
    });
}

tb_status tb_anomaly_write(const tb_matrix* inconsistency, size_t top, const char* path) {
    return guard([&] {
        require(inconsistency, "inconsistency");
        auto ranking = anomaly_scores(inconsistency->value);
        if (top > 0) {
            ranking = top_k(ranking, top);
        }
        auto out = open_out(path);
        write_ranking(out, ranking);
    });
}

tb_status tb_hcluster(const tb_matrix* m, tb_matrix_role role, tb_linkage linkage, tb_dendrogram** out) {
    return guard([&] {
        require(m, "matrix");
        require(out, "out");
        const Linkage l = to_linkage(linkage);
        switch (role) {
            case TB_ROLE_AFFINITY: *out = new tb_dendrogram{hcluster_affinity(m->value, l)}; break;
            case TB_ROLE_INCONSISTENCY:
                *out = new tb_dendrogram{
                    hcluster_inconsistency(InconsistencyMatrix{m->value, InconsistencyKind::behaviour, "", ""}, l)};
                break;
            case TB_ROLE_DISTANCE:
            default: *out = new tb_dendrogram{hcluster(m->value, l)}; break;
        }
    });
}

size_t tb_dendrogram_merge_count(const tb_dendrogram* d) { return d ? d->value.merges.size() : 0; }

tb_status tb_dendrogram_merge(const tb_dendrogram* d, size_t i, int* a, int* b, double* height, int* size) {
    return guard([&] {
        require(d, "dendrogram");
        if (i >= d->value.merges.size()) {
            throw Error(ErrorCode::argument, "merge index out of range");
        }
        const auto& m = d->value.merges[i];
        if (a) *a = m.a;
        if (b) *b = m.b;
        if (height) *height = m.height;
        if (size) *size = m.size;
    });
}

tb_status tb_dendrogram_newick(const tb_dendrogram* d, char** out) {
    return guard([&] {
        require(d, "dendrogram");
        require(out, "out");
        *out = dup_string(to_newick(d->value));
    });
}

tb_status tb_dendrogram_json(const tb_dendrogram* d, char** out) {
    return guard([&] {
        require(d, "dendrogram");
        require(out, "out");
        *out = dup_string(to_merge_json(d->value));
    });
}

void tb_dendrogram_free(tb_dendrogram* d) { delete d; }

// ---- fetch / study / report

tb_status tb_fetch(const char* url_template, const char* ticker, const char* start, const char* end,
                   const char* cache_dir, int max_attempts, int min_interval_ms, int backoff_ms, char** out_path,
                   int* from_cache) {
    return guard([&] {
        require(url_template, "url_template");
        require(ticker, "ticker");
        require(start, "start");
        require(end, "end");
        require(cache_dir, "cache_dir");
        FetchOptions options;
        options.url_template = url_template;
        options.cache_dir = cache_dir;
        options.max_attempts = max_attempts;
        options.min_interval = std::chrono::milliseconds(min_interval_ms);
        options.backoff = std::chrono::milliseconds(backoff_ms);
        Fetcher fetcher(options);
        const auto result = fetcher.fetch(ticker, DateRange{parse_date(start), parse_date(end)});
        if (out_path) *out_path = dup_string(result.path.string());
        if (from_cache) *from_cache = result.from_cache ? 1 : 0;
    });
}

tb_status tb_study_config_load(const char* path, tb_study_config** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new tb_study_config{load_study_config(path)};
    });
}

tb_status tb_study_config_parse(const char* json_text, tb_study_config** out) {
    return guard([&] {
        require(json_text, "json_text");
        require(out, "out");
        *out = new tb_study_config{parse_study_config(json_text)};
    });
}

tb_status tb_study_config_set(tb_study_config* cfg, const char* key, const char* value) {
    return guard([&] {
        require(cfg, "config");
        require(key, "key");
        require(value, "value");
        auto doc = nlohmann::ordered_json::parse(study_config_to_json(cfg->value));
        nlohmann::ordered_json parsed;
        try {
            parsed = nlohmann::ordered_json::parse(value);
        } catch (const nlohmann::json::exception&) {
            parsed = std::string(value);
        }
        std::string pointer = "/";
        for (const char* c = key; *c; ++c) {
            pointer += *c == '.' ? '/' : *c;
        }
        try {
            doc[nlohmann::ordered_json::json_pointer(pointer)] = parsed;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::config, std::string("cannot set ") + key + ": " + e.what());
        }
        // An explicit data source replaces the other one.
        if (std::strcmp(key, "data.directory") == 0) {
            doc["data"].erase("endpoint");
        } else if (std::strcmp(key, "data.endpoint") == 0) {
            doc["data"].erase("directory");
        }
        cfg->value = parse_study_config(doc.dump());
    });
}

tb_status tb_study_config_json(const tb_study_config* cfg, char** out) {
    return guard([&] {
        require(cfg, "config");
        require(out, "out");
        *out = dup_string(study_config_to_json(cfg->value));
    });
}

void tb_study_config_free(tb_study_config* cfg) { delete cfg; }

tb_status tb_study_run(const tb_study_config* cfg, char** summary_json) {
    return guard([&] {
        require(cfg, "config");
        const auto summary = run_study(cfg->value);
        if (summary_json) {
            nlohmann::ordered_json doc;
            doc["instruments"] = summary.tickers;
            doc["excluded"] = nlohmann::ordered_json::array();
            for (const auto& ex : summary.excluded) {
                doc["excluded"].push_back({{"ticker", ex.ticker}, {"reason", ex.reason}});
            }
            doc["files"] = summary.files;
            *summary_json = dup_string(doc.dump(2) + "\n");
        }
    });
}

tb_status tb_report(const char* bundle_dir, char** out_text) {
    return guard([&] {
        require(bundle_dir, "bundle_dir");
        require(out_text, "out_text");
        *out_text = dup_string(render_report(bundle_dir));
    });
}

}  // extern "C"
