/*
 * C interface to the tailbreak library.
 *
 * Every object is an opaque handle created by a tb_* function and released by
 * the matching tb_*_free. Functions that can fail return a tb_status; on
 * failure tb_last_error() holds a message for the calling thread. Strings
 * returned through char** must be released with tb_string_free.
 */
#ifndef TAILBREAK_TAILBREAK_H
#define TAILBREAK_TAILBREAK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define TB_API __declspec(dllexport)
#else
#  define TB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tb_status {
    TB_OK = 0,
    TB_ERR_PARSE = 1,
    TB_ERR_VALIDATION = 2,
    TB_ERR_INSUFFICIENT_DATA = 3,
    TB_ERR_ARGUMENT = 4,
    TB_ERR_ALIGNMENT = 5,
    TB_ERR_EMPTY_WINDOW = 6,
    TB_ERR_MASS_MISMATCH = 7,
    TB_ERR_CALIBRATION = 8,
    TB_ERR_DEGENERATE = 9,
    TB_ERR_IO = 10,
    TB_ERR_NETWORK = 11,
    TB_ERR_CONFIG = 12,
    TB_ERR_MISSING_ARTIFACT = 13,
    TB_ERR_INTERNAL = 99
} tb_status;

typedef enum tb_series_kind { TB_SERIES_GENERIC = 0, TB_SERIES_RETURNS = 1, TB_SERIES_VARIANCE = 2 } tb_series_kind;
typedef enum tb_tail_kind { TB_TAIL_TWO_SIDED = 0, TB_TAIL_UPPER = 1 } tb_tail_kind;
typedef enum tb_linkage { TB_LINKAGE_AVERAGE = 0, TB_LINKAGE_SINGLE = 1, TB_LINKAGE_COMPLETE = 2 } tb_linkage;
/* How hcluster turns the matrix into dissimilarities. */
typedef enum tb_matrix_role {
    TB_ROLE_DISTANCE = 0,      /* used as is */
    TB_ROLE_AFFINITY = 1,      /* 1 - A */
    TB_ROLE_INCONSISTENCY = 2  /* max(INC) - INC */
} tb_matrix_role;

typedef struct tb_ohlc tb_ohlc;
typedef struct tb_series tb_series;
typedef struct tb_panel tb_panel;
typedef struct tb_measure tb_measure;
typedef struct tb_thresholds tb_thresholds;
typedef struct tb_breakset tb_breakset;
typedef struct tb_matrix tb_matrix;
typedef struct tb_dendrogram tb_dendrogram;
typedef struct tb_study_config tb_study_config;

/* NULL members fall back to "date", "close", "high", "low"; delimiter 0 means ','. */
typedef struct tb_ohlc_schema {
    const char* date;
    const char* close;
    const char* high;
    const char* low;
    char delimiter;
} tb_ohlc_schema;

typedef struct tb_detector_config {
    double arl0;
    int burn_in;
    int mc_replications;
    uint64_t seed;
} tb_detector_config;

TB_API const char* tb_version(void);
TB_API const char* tb_status_name(tb_status status);
TB_API const char* tb_last_error(void);
TB_API void tb_string_free(char* s);

/* ---- market data ---- */
TB_API tb_status tb_ohlc_read(const char* path, const tb_ohlc_schema* schema, const char* ticker, tb_ohlc** out);
TB_API tb_status tb_ohlc_parse(const char* text, size_t length, const tb_ohlc_schema* schema, const char* ticker,
                               tb_ohlc** out);
TB_API size_t tb_ohlc_length(const tb_ohlc* s);
TB_API const char* tb_ohlc_ticker(const tb_ohlc* s);
TB_API void tb_ohlc_free(tb_ohlc* s);

TB_API tb_status tb_log_returns(const tb_ohlc* s, tb_series** out);
TB_API tb_status tb_parkinson_variance(const tb_ohlc* s, tb_series** out);
/* Dates are ISO or DD-MM-YYYY; the window is inclusive. */
TB_API tb_status tb_series_slice(const tb_series* s, const char* start, const char* end, tb_series** out);
TB_API tb_status tb_series_read(const char* path, tb_series_kind kind, tb_series** out);
TB_API tb_status tb_series_write(const tb_series* s, const char* path);
TB_API size_t tb_series_length(const tb_series* s);
TB_API const double* tb_series_values(const tb_series* s);
TB_API const char* tb_series_ticker(const tb_series* s);
/* Writes the ISO date of observation i into buf (at least 11 bytes). */
TB_API tb_status tb_series_date(const tb_series* s, size_t i, char* buf, size_t buf_size);
TB_API void tb_series_free(tb_series* s);

TB_API tb_status tb_panel_align(const tb_series* const* series, size_t count, tb_panel** out);
TB_API tb_status tb_panel_slice(const tb_panel* p, const char* start, const char* end, tb_panel** out);
TB_API size_t tb_panel_instruments(const tb_panel* p);
TB_API size_t tb_panel_length(const tb_panel* p);
TB_API const double* tb_panel_row(const tb_panel* p, size_t i);
TB_API const char* tb_panel_ticker(const tb_panel* p, size_t i);
TB_API tb_status tb_panel_write(const tb_panel* p, const char* path);
TB_API void tb_panel_free(tb_panel* p);

/* ---- tails ---- */
TB_API tb_status tb_restrict(const double* values, size_t n, tb_tail_kind kind, double q, tb_measure** out);
TB_API size_t tb_measure_atom_count(const tb_measure* m);
TB_API tb_status tb_measure_atom(const tb_measure* m, size_t i, double* location, double* weight);
TB_API double tb_measure_mass(const tb_measure* m);
TB_API tb_status tb_measure_write(const tb_measure* m, const char* path);
TB_API tb_status tb_wasserstein1(const tb_measure* a, const tb_measure* b, double* out);
TB_API tb_status tb_restricted_mean(const tb_measure* m, double* out);
TB_API void tb_measure_free(tb_measure* m);

/* ---- change points ---- */
TB_API void tb_detector_config_default(tb_detector_config* cfg);
TB_API tb_status tb_mann_whitney(const double* x, size_t n, int k, double* out);
/* change receives the 1-based split index, or 0 when no change is flagged. */
TB_API tb_status tb_batch_detect(const double* x, size_t n, double alpha, const tb_detector_config* cfg, int* change,
                                 double* statistic, double* threshold);
/* cache_dir may be NULL to skip the on-disk cache. */
TB_API tb_status tb_thresholds_calibrate(const tb_detector_config* cfg, int t_max, const char* cache_dir,
                                         tb_thresholds** out);
TB_API int tb_thresholds_burn_in(const tb_thresholds* t);
TB_API int tb_thresholds_t_max(const tb_thresholds* t);
TB_API tb_status tb_thresholds_at(const tb_thresholds* t, int time, double* out);
TB_API void tb_thresholds_free(tb_thresholds* t);

TB_API tb_status tb_sequential_detect(const double* x, size_t n, const tb_detector_config* cfg,
                                      const tb_thresholds* thresholds, const char* ticker, tb_breakset** out);
TB_API tb_status tb_breakset_create(const char* ticker, const int* breaks, size_t count, int series_length,
                                    tb_breakset** out);
TB_API size_t tb_breakset_count(const tb_breakset* b);
TB_API const int* tb_breakset_breaks(const tb_breakset* b);
TB_API int tb_breakset_series_length(const tb_breakset* b);
TB_API const char* tb_breakset_ticker(const tb_breakset* b);
TB_API void tb_breakset_free(tb_breakset* b);
TB_API tb_status tb_breaksets_write(const tb_breakset* const* sets, size_t count, const char* path);
/* Allocates *out as an array of *count handles; release with tb_breaksets_free. */
TB_API tb_status tb_breaksets_read(const char* path, tb_breakset*** out, size_t* count);
TB_API void tb_breaksets_free(tb_breakset** sets, size_t count);

/* ---- set distance ---- */
TB_API tb_status tb_mj_distance(const tb_breakset* a, const tb_breakset* b, double* out);

/* ---- matrices ---- */
TB_API tb_status tb_extremity_matrix(const tb_panel* p, tb_tail_kind kind, double q, tb_matrix** out);
TB_API tb_status tb_break_matrix(const tb_breakset* const* sets, size_t count, tb_matrix** out);
TB_API tb_status tb_matrix_read(const char* path, tb_matrix** out);
TB_API tb_status tb_matrix_write(const tb_matrix* m, const char* path);
TB_API size_t tb_matrix_size(const tb_matrix* m);
TB_API const char* tb_matrix_label(const tb_matrix* m, size_t i);
TB_API double tb_matrix_at(const tb_matrix* m, size_t i, size_t j);
TB_API void tb_matrix_free(tb_matrix* m);

/* ---- structure ---- */
TB_API tb_status tb_frobenius_matrix(const tb_matrix* m, double* out);
TB_API tb_status tb_frobenius_panel(const tb_panel* p, double* out_values, size_t out_length);
TB_API tb_status tb_affinity(const tb_matrix* distance, tb_matrix** out);
/* lhs - rhs; labels must match. */
TB_API tb_status tb_inconsistency(const tb_matrix* lhs, const tb_matrix* rhs, tb_matrix** out);
/* top_k = 0 writes the full ranking. */
TB_API tb_status tb_anomaly_write(const tb_matrix* inconsistency, size_t top_k, const char* path);
TB_API tb_status tb_hcluster(const tb_matrix* m, tb_matrix_role role, tb_linkage linkage, tb_dendrogram** out);
TB_API size_t tb_dendrogram_merge_count(const tb_dendrogram* d);
TB_API tb_status tb_dendrogram_merge(const tb_dendrogram* d, size_t i, int* a, int* b, double* height, int* size);
TB_API tb_status tb_dendrogram_newick(const tb_dendrogram* d, char** out);
TB_API tb_status tb_dendrogram_json(const tb_dendrogram* d, char** out);
TB_API void tb_dendrogram_free(tb_dendrogram* d);

/* ---- fetch / study / report ---- */
TB_API tb_status tb_fetch(const char* url_template, const char* ticker, const char* start, const char* end,
                          const char* cache_dir, int max_attempts, int min_interval_ms, int backoff_ms,
                          char** out_path, int* from_cache);

TB_API tb_status tb_study_config_load(const char* path, tb_study_config** out);
TB_API tb_status tb_study_config_parse(const char* json_text, tb_study_config** out);
/* Sets a dotted key such as "detector.arl0"; value is parsed as JSON, or taken as a string. */
TB_API tb_status tb_study_config_set(tb_study_config* cfg, const char* key, const char* value);
TB_API tb_status tb_study_config_json(const tb_study_config* cfg, char** out);
TB_API void tb_study_config_free(tb_study_config* cfg);
/* summary_json may be NULL. */
TB_API tb_status tb_study_run(const tb_study_config* cfg, char** summary_json);
TB_API tb_status tb_report(const char* bundle_dir, char** out_text);

#ifdef __cplusplus
}
#endif

#endif /* TAILBREAK_TAILBREAK_H */
