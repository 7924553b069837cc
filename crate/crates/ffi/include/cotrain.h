/* Generated by cbindgen; do not edit. */

#ifndef COTRAIN_H
#define COTRAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CtStatus {
  CT_STATUS_OK = 0,
  CT_STATUS_NULL_POINTER = 1,
  CT_STATUS_INVALID_UTF8 = 2,
  CT_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The caller's buffer is too small; the required length was written.
   */
  CT_STATUS_BUFFER_TOO_SMALL = 4,
  CT_STATUS_STORAGE = 5,
  CT_STATUS_CONFIG = 6,
  CT_STATUS_RUNTIME = 7,
  /**
   * The pipeline ran but its policy never fired.
   */
  CT_STATUS_NO_TRIGGERS = 8,
  CT_STATUS_PANIC = 99,
} CtStatus;

/**
 * A sample store: registered files plus the key index.
 */
typedef struct CtStore CtStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ct_version(void);

/**
 * Copy of the last error message on this thread, or NULL when the last call
 * succeeded. Free with [`ct_string_free`].
 */
char *ct_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ct_string_free(char *s);

/**
 * An empty store.
 */
struct CtStore *ct_store_new(void);

/**
 * Loads a store saved in `dir` (as written by `cotrain register` or
 * `cotrain synth`) into `*out`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` writable.
 */
enum CtStatus ct_store_open(const char *dir, struct CtStore **out);

/**
 * Writes the store index to `dir`.
 *
 * # Safety
 * `store` must be a live handle and `dir` a NUL-terminated string.
 */
enum CtStatus ct_store_save(const struct CtStore *store, const char *dir);

/**
 * # Safety
 * `store` must be NULL or a handle from this library, freed at most once.
 */
void ct_store_free(struct CtStore *store);

/**
 * Number of registered samples.
 *
 * # Safety
 * `store` must be a live handle and `out` writable.
 */
enum CtStatus ct_store_len(const struct CtStore *store, uint64_t *out);

/**
 * Registers an MDSF file of fixed `record_bytes` records. Sample `i` gets
 * timestamp `base_timestamp + offsets[i]`, or `base_timestamp` when
 * `offsets` is NULL. The first and one-past-last assigned keys are written
 * to `first_key` / `end_key` when those are non-NULL.
 *
 * # Safety
 * `store` must be a live handle not used concurrently, `path` a
 * NUL-terminated string, and `offsets` NULL or `num_offsets` readable values.
 */
enum CtStatus ct_store_register_binary(struct CtStore *store,
                                       const char *path,
                                       uint32_t record_bytes,
                                       int64_t base_timestamp,
                                       const int64_t *offsets,
                                       size_t num_offsets,
                                       uint64_t *first_key,
                                       uint64_t *end_key);

/**
 * Copies the payload of `key` into `buf`. `*payload_len` always receives the
 * payload length; when it exceeds `buf_len` nothing is copied and
 * `BufferTooSmall` is returned. `label` and `timestamp` may be NULL.
 *
 * # Safety
 * `store` must be a live handle, `buf` NULL or `buf_len` writable bytes, and
 * the out-pointers writable when non-NULL.
 */
enum CtStatus ct_store_get_payload(const struct CtStore *store,
                                   uint64_t key,
                                   int64_t *label,
                                   int64_t *timestamp,
                                   uint8_t *buf,
                                   size_t buf_len,
                                   size_t *payload_len);

/**
 * Squared MMD between the row sets `x` (`n x dim`) and `y` (`m x dim`),
 * both row-major. A `bandwidth` of 0 or less selects the median heuristic.
 *
 * # Safety
 * `x` and `y` must hold `n*dim` and `m*dim` readable doubles; `out` writable.
 */
enum CtStatus ct_mmd2(const double *x,
                      size_t n,
                      const double *y,
                      size_t m,
                      size_t dim,
                      double bandwidth,
                      double *out);

/**
 * Composite-model mapping for intervals given by their anchors. Writes one
 * model index per anchor to `out`, or -1 where no model applies.
 * `trained` selects the currently-trained variant; `undefined_last` picks
 * the last model for trained lookups before any model finished.
 *
 * # Safety
 * `model_ends` must hold `num_models` and `anchors` / `out` `num_anchors`
 * values.
 */
enum CtStatus ct_composite_mapping(const int64_t *model_ends,
                                   size_t num_models,
                                   const int64_t *anchors,
                                   size_t num_anchors,
                                   bool trained,
                                   bool undefined_last,
                                   int64_t *out);

/**
 * Runs the pipeline described by the YAML document `config` over `store`,
 * working in `out_dir/work` and writing the reports to `out_dir`. When
 * `score` is non-NULL it receives the accuracy score of the currently
 * active composite model, or NaN if there is none.
 *
 * # Safety
 * `config` and `out_dir` must be NUL-terminated strings and `store` a live
 * handle.
 */
enum CtStatus ct_run_pipeline(const char *config,
                              const struct CtStore *store,
                              const char *out_dir,
                              double *score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COTRAIN_H */
