#ifndef HOSTREP_H
#define HOSTREP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HostrepStatus {
  HOSTREP_STATUS_OK = 0,
  HOSTREP_STATUS_NULL_ARGUMENT = 1,
  HOSTREP_STATUS_INVALID_UTF8 = 2,
  HOSTREP_STATUS_CONFIG_ERROR = 3,
  HOSTREP_STATUS_DATA_ERROR = 4,
  HOSTREP_STATUS_IO_ERROR = 5,
  HOSTREP_STATUS_NOT_FOUND = 6,
  HOSTREP_STATUS_BUFFER_TOO_SMALL = 7,
  HOSTREP_STATUS_PANIC = 8,
} HostrepStatus;

/**
 * Parsed pipeline configuration.
 */
typedef struct HostrepConfig HostrepConfig;

/**
 * Result of a pipeline run.
 */
typedef struct HostrepReport HostrepReport;

typedef struct HostrepRoutingTable HostrepRoutingTable;

typedef struct HostrepSuffixRules HostrepSuffixRules;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *hostrep_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hostrep_version(void);

/**
 * Parse public-suffix rules (one per line, `*.` wildcards and `!` exceptions).
 *
 * # Safety
 * `rules_text` must be a valid C string and `out_rules` a valid pointer.
 */
enum HostrepStatus hostrep_suffix_rules_parse(const char *rules_text,
                                              struct HostrepSuffixRules **out_rules);

/**
 * # Safety
 * `rules` must come from [`hostrep_suffix_rules_parse`] and not be freed twice.
 */
void hostrep_suffix_rules_free(struct HostrepSuffixRules *rules);

/**
 * Registrable domain of `hostname`, written NUL-terminated into `buf`.
 *
 * # Safety
 * `buf` must hold `buf_len` bytes; `needed` may be null.
 */
enum HostrepStatus hostrep_extract_2ld(const struct HostrepSuffixRules *rules,
                                       const char *hostname,
                                       char *buf,
                                       size_t buf_len,
                                       size_t *needed);

/**
 * Load a `prefix,asn` routing snapshot.
 *
 * # Safety
 * `path` must be a valid C string and `out_table` a valid pointer.
 */
enum HostrepStatus hostrep_routing_load(const char *path, struct HostrepRoutingTable **out_table);

/**
 * # Safety
 * `table` must come from [`hostrep_routing_load`] and not be freed twice.
 */
void hostrep_routing_free(struct HostrepRoutingTable *table);

/**
 * Origin ASN of the longest prefix covering `ip`; `NotFound` when unrouted.
 *
 * # Safety
 * All pointers must be valid.
 */
enum HostrepStatus hostrep_routing_lookup(const struct HostrepRoutingTable *table,
                                          const char *ip,
                                          uint32_t *out_asn);

/**
 * Pearson's r of two vectors of length `n`.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles each.
 */
enum HostrepStatus hostrep_pearson(const double *x, const double *y, size_t n, double *out_r);

/**
 * Spearman's rho (average ranks for ties).
 *
 * # Safety
 * `x` and `y` must point to `n` doubles each.
 */
enum HostrepStatus hostrep_spearman(const double *x, const double *y, size_t n, double *out_r);

/**
 * Load and validate a TOML config file.
 *
 * # Safety
 * `path` must be a valid C string and `out_config` a valid pointer.
 */
enum HostrepStatus hostrep_config_load(const char *path, struct HostrepConfig **out_config);

/**
 * Switch between the thread pool and single-threaded evaluation.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum HostrepStatus hostrep_config_set_parallel(struct HostrepConfig *config, bool parallel);

/**
 * # Safety
 * `config` must come from [`hostrep_config_load`] and not be freed twice.
 */
void hostrep_config_free(struct HostrepConfig *config);

/**
 * Run the full pipeline.
 *
 * # Safety
 * `config` must be a live handle and `out_report` a valid pointer.
 */
enum HostrepStatus hostrep_run(const struct HostrepConfig *config,
                               struct HostrepReport **out_report);

/**
 * # Safety
 * `report` must come from [`hostrep_run`] and not be freed twice.
 */
void hostrep_report_free(struct HostrepReport *report);

/**
 * Number of providers scored (the universe size).
 *
 * # Safety
 * `report` must be a live handle.
 */
enum HostrepStatus hostrep_report_provider_count(const struct HostrepReport *report,
                                                 size_t *out_count);

/**
 * Occurrence score at position `index`, worst first.
 *
 * # Safety
 * `report` must be a live handle; output pointers must be valid.
 */
enum HostrepStatus hostrep_report_occurrence_at(const struct HostrepReport *report,
                                                size_t index,
                                                uint32_t *out_asn,
                                                double *out_score);

/**
 * Uptime score of `asn`; `NotFound` when the run has no uptime metric or no such provider.
 *
 * # Safety
 * `report` must be a live handle; `out_score` must be valid.
 */
enum HostrepStatus hostrep_report_uptime_score(const struct HostrepReport *report,
                                               uint32_t asn,
                                               double *out_score);

/**
 * Write every report file into `dir`.
 *
 * # Safety
 * `report` must be a live handle and `dir` a valid C string.
 */
enum HostrepStatus hostrep_report_write(const struct HostrepReport *report, const char *dir);

/**
 * Write a synthetic dataset and its `config.toml` into `out_dir`.
 *
 * # Safety
 * `out_dir` must be a valid C string; `out_worst_asn` may be null.
 */
enum HostrepStatus hostrep_generate_fixture(uint64_t seed,
                                            size_t providers,
                                            size_t feeds,
                                            double abuse_rate,
                                            size_t uptime_feeds,
                                            const char *out_dir,
                                            uint32_t *out_worst_asn);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOSTREP_H */
