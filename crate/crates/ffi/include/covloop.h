#ifndef COVLOOP_H
#define COVLOOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CovloopBackend {
  COVLOOP_BACKEND_STUB = 0,
  COVLOOP_BACKEND_HTTP = 1,
} CovloopBackend;

typedef enum CovloopFeedback {
  COVLOOP_FEEDBACK_DUAL = 0,
  COVLOOP_FEEDBACK_LINE = 1,
  COVLOOP_FEEDBACK_BRANCH = 2,
  COVLOOP_FEEDBACK_NONE = 3,
} CovloopFeedback;

typedef enum CovloopInputKind {
  COVLOOP_INPUT_KIND_INTEGER = 0,
  COVLOOP_INPUT_KIND_FLOAT = 1,
  COVLOOP_INPUT_KIND_STRING = 2,
  COVLOOP_INPUT_KIND_CHAR = 3,
} CovloopInputKind;

typedef enum CovloopLanguage {
  COVLOOP_LANGUAGE_C = 0,
  COVLOOP_LANGUAGE_PYTHON = 1,
} CovloopLanguage;

typedef enum CovloopStatus {
  COVLOOP_STATUS_OK = 0,
  COVLOOP_STATUS_NULL_POINTER = 1,
  COVLOOP_STATUS_INVALID_UTF8 = 2,
  COVLOOP_STATUS_CONTRACT_VIOLATION = 3,
  COVLOOP_STATUS_PARSE_ERROR = 4,
  COVLOOP_STATUS_UNSUPPORTED_LANGUAGE = 5,
  COVLOOP_STATUS_IO_ERROR = 6,
  COVLOOP_STATUS_RUN_ERROR = 7,
  COVLOOP_STATUS_OUT_OF_RANGE = 8,
  COVLOOP_STATUS_PANIC = 9,
} CovloopStatus;

typedef enum CovloopTermination {
  COVLOOP_TERMINATION_THRESHOLD_MET = 0,
  COVLOOP_TERMINATION_K_MAX_REACHED = 1,
  COVLOOP_TERMINATION_BACKEND_FAILURE = 2,
} CovloopTermination;

typedef struct CovloopCache CovloopCache;

typedef struct CovloopReport CovloopReport;

typedef struct CovloopRunResult CovloopRunResult;

typedef struct CovloopSignature CovloopSignature;

/**
 * Loop parameters. Start from `covloop_run_options_default()`. String
 * fields may be NULL.
 */
typedef struct CovloopRunOptions {
  double threshold;
  uint32_t k_max;
  uint64_t timeout_ms;
  enum CovloopFeedback feedback;
  enum CovloopBackend backend;
  const char *model_id;
  const char *endpoint;
  const char *endpoint_profile;
  const char *bound;
} CovloopRunOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *covloop_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void covloop_string_free(char *s);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum CovloopStatus covloop_total_coverage(double line_pct, double branch_pct, double *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for writes.
 */
enum CovloopStatus covloop_detect_language(const char *path, enum CovloopLanguage *out);

/**
 * # Safety
 * `source` must be a NUL-terminated string; `out` valid for writes.
 */
enum CovloopStatus covloop_signature_extract(const char *source,
                                             enum CovloopLanguage language,
                                             struct CovloopSignature **out);

/**
 * # Safety
 * `sig` must be a live handle.
 */
size_t covloop_signature_count(const struct CovloopSignature *sig);

/**
 * # Safety
 * `sig` must be a live handle.
 */
size_t covloop_signature_warning_count(const struct CovloopSignature *sig);

/**
 * # Safety
 * `sig` must be a live handle; `out` valid for writes.
 */
enum CovloopStatus covloop_signature_kind(const struct CovloopSignature *sig,
                                          size_t index,
                                          enum CovloopInputKind *out);

/**
 * # Safety
 * `sig` must be NULL or a handle from `covloop_signature_extract`.
 */
void covloop_signature_free(struct CovloopSignature *sig);

/**
 * Parses annotated `gcov -b -c` output.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` valid for writes.
 */
enum CovloopStatus covloop_report_parse_gcov(const char *text, struct CovloopReport **out);

/**
 * Parses a single-file coverage.py JSON export.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` valid for writes.
 */
enum CovloopStatus covloop_report_parse_dynamic(const char *text, struct CovloopReport **out);

/**
 * Parses a coverage artifact as written by `covloop_report_to_json`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` valid for writes.
 */
enum CovloopStatus covloop_report_from_json(const char *text, struct CovloopReport **out);

/**
 * # Safety
 * `report` must be a live handle; `out` valid for writes.
 */
enum CovloopStatus covloop_report_to_json(const struct CovloopReport *report, char **out);

/**
 * # Safety
 * `report` must be a live handle; `path` a NUL-terminated string.
 */
enum CovloopStatus covloop_report_emit(const struct CovloopReport *report, const char *path);

/**
 * # Safety
 * `report` must be a live handle.
 */
double covloop_report_line_coverage(const struct CovloopReport *report);

/**
 * # Safety
 * `report` must be a live handle.
 */
double covloop_report_branch_coverage(const struct CovloopReport *report);

/**
 * # Safety
 * `report` must be a live handle.
 */
double covloop_report_total_coverage(const struct CovloopReport *report);

/**
 * # Safety
 * `report` must be a live handle.
 */
size_t covloop_report_missing_branch_count(const struct CovloopReport *report);

/**
 * # Safety
 * `report` must be NULL or a handle returned by a `covloop_report_*`
 * constructor. Reports borrowed from a run result must not be freed.
 */
void covloop_report_free(struct CovloopReport *report);

struct CovloopCache *covloop_cache_new(void);

/**
 * Inserts the case `values[0..count]`; `inserted` reports whether it was
 * novel.
 *
 * # Safety
 * `cache` must be a live handle; `values` must hold `count` NUL-terminated
 * strings (it may be NULL when `count` is 0); `inserted` may be NULL.
 */
enum CovloopStatus covloop_cache_insert(struct CovloopCache *cache,
                                        const char *const *values,
                                        size_t count,
                                        bool *inserted);

/**
 * # Safety
 * `cache` must be a live handle.
 */
size_t covloop_cache_len(const struct CovloopCache *cache);

/**
 * # Safety
 * `cache` must be a live handle; `out` valid for writes.
 */
enum CovloopStatus covloop_cache_summary(const struct CovloopCache *cache,
                                         size_t limit,
                                         char **out);

/**
 * Writes cases from `since_index` on as `test_NNNN.txt` files in `dir`.
 *
 * # Safety
 * `cache` must be a live handle; `dir` a NUL-terminated string.
 */
enum CovloopStatus covloop_cache_persist(const struct CovloopCache *cache,
                                         const char *dir,
                                         size_t since_index);

/**
 * # Safety
 * `cache` must be NULL or a handle from `covloop_cache_new`.
 */
void covloop_cache_free(struct CovloopCache *cache);

struct CovloopRunOptions covloop_run_options_default(void);

/**
 * Runs the full loop on `source_path` inside `workdir`.
 *
 * # Safety
 * `source_path` and `workdir` must be NUL-terminated strings; `options`
 * may be NULL for defaults; `out` valid for writes.
 */
enum CovloopStatus covloop_run_loop(const char *source_path,
                                    const char *workdir,
                                    const struct CovloopRunOptions *options,
                                    struct CovloopRunResult **out);

/**
 * # Safety
 * `result` must be a live handle.
 */
enum CovloopTermination covloop_run_result_termination(const struct CovloopRunResult *result);

/**
 * # Safety
 * `result` must be a live handle.
 */
size_t covloop_run_result_iterations(const struct CovloopRunResult *result);

/**
 * Final coverage, borrowed from `result`; do not free.
 *
 * # Safety
 * `result` must be a live handle.
 */
const struct CovloopReport *covloop_run_result_report(const struct CovloopRunResult *result);

/**
 * # Safety
 * `result` must be a live handle; `out` valid for writes.
 */
enum CovloopStatus covloop_run_result_to_json(const struct CovloopRunResult *result, char **out);

/**
 * # Safety
 * `result` must be NULL or a handle from `covloop_run_loop`.
 */
void covloop_run_result_free(struct CovloopRunResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVLOOP_H */
