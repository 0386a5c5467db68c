#ifndef HOPCHAIN_H
#define HOPCHAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_ARGUMENT = 1,
  HC_STATUS_INVALID_UTF8 = 2,
  HC_STATUS_IO = 3,
  HC_STATUS_MALFORMED_INPUT = 4,
  HC_STATUS_NOT_FOUND = 5,
  HC_STATUS_INVALID_QUERY = 6,
  HC_STATUS_INVALID_CONFIG = 7,
  HC_STATUS_EMBEDDING = 8,
  HC_STATUS_PANIC = 9,
} HcStatus;

/**
 * Opaque corpus handle.
 */
typedef struct HcCorpus HcCorpus;

typedef struct HcCounts {
  uint64_t documents;
  uint64_t passages;
  uint64_t mentions;
  uint64_t entities;
} HcCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *hc_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *hc_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void hc_string_free(char *s);

/**
 * Opens a store directory written by `hopchain ingest`.
 *
 * # Safety
 * `store_dir` is a NUL-terminated string; `out` is a valid pointer.
 */
enum HcStatus hc_corpus_open(const char *store_dir, struct HcCorpus **out);

/**
 * Ingests a corpus JSONL file (and optional entity JSONL, may be null)
 * into memory without writing a store.
 *
 * # Safety
 * String arguments are NUL-terminated or null where allowed; `out` is valid.
 */
enum HcStatus hc_corpus_ingest(const char *corpus_jsonl,
                               const char *entities_jsonl,
                               struct HcCorpus **out);

/**
 * Releases a corpus handle. Null is ignored.
 *
 * # Safety
 * `corpus` must come from this library and not have been freed.
 */
void hc_corpus_free(struct HcCorpus *corpus);

/**
 * # Safety
 * `corpus` is a live handle; `out` is valid.
 */
enum HcStatus hc_corpus_counts(const struct HcCorpus *corpus, struct HcCounts *out);

/**
 * Sorted passage ids mentioning `entity_id`, as a JSON array.
 *
 * # Safety
 * `corpus` is a live handle; `entity_id` is NUL-terminated; `out_json` is valid.
 */
enum HcStatus hc_passages_with_entity(const struct HcCorpus *corpus,
                                      const char *entity_id,
                                      char **out_json);

/**
 * Relation query text for two entity names.
 *
 * # Safety
 * Names are NUL-terminated; `out` is valid.
 */
enum HcStatus hc_render_query(const char *head_name, const char *tail_name, char **out);

/**
 * Normalized BM25 terms of `text`, as a JSON array.
 *
 * # Safety
 * `text` is NUL-terminated; `out_json` is valid.
 */
enum HcStatus hc_normalize_text(const char *text, char **out_json);

/**
 * Retrieves evidence for one pair. `config_json` is a pipeline configuration
 * object (null for defaults). The result is a JSON object with `query`,
 * `failed`, `ranked` (ranked-output records), and `contexts`.
 *
 * # Safety
 * `corpus` is a live handle; strings are NUL-terminated or null where
 * allowed; `out_json` is valid.
 */
enum HcStatus hc_retrieve_pair(const struct HcCorpus *corpus,
                               const char *config_json,
                               const char *head,
                               const char *tail,
                               char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOPCHAIN_H */
