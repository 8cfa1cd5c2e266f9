#ifndef CONTRASENT_H
#define CONTRASENT_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsPooling {
  CS_POOLING_CLS = 0,
  CS_POOLING_MEAN = 1,
  CS_POOLING_FIRST_LAST = 2,
  CS_POOLING_TOP2 = 3,
} CsPooling;

typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_IO = 3,
  CS_STATUS_FORMAT = 4,
  CS_STATUS_CONFIG = 5,
  CS_STATUS_DIMENSION = 6,
  CS_STATUS_DEGENERATE = 7,
  CS_STATUS_INPUT = 8,
  CS_STATUS_UNDEFINED_METRIC = 9,
  CS_STATUS_BUFFER_TOO_SMALL = 10,
  CS_STATUS_VOCABULARY_MISMATCH = 11,
  CS_STATUS_PANIC = 12,
  CS_STATUS_OTHER = 13,
} CsStatus;

/**
 * Encoder weights together with the vocabulary they were trained with.
 */
typedef struct CsEncoder CsEncoder;

/**
 * Token vocabulary.
 */
typedef struct CsVocab CsVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Bytes needed for the last error message including its NUL, or 0 when the
 * last call on this thread succeeded.
 */
size_t cs_last_error_length(void);

/**
 * Copies the last error message into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes of writes.
 */
enum CsStatus cs_last_error_message(char *buf, size_t len);

/**
 * Loads a one-token-per-line vocabulary. Release with [`cs_vocab_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CsStatus cs_vocab_load(const char *path, struct CsVocab **out);

/**
 * # Safety
 * `vocab` must be NULL or a handle from [`cs_vocab_load`].
 */
size_t cs_vocab_len(const struct CsVocab *vocab);

/**
 * # Safety
 * `vocab` must be NULL or a handle from [`cs_vocab_load`] not freed before.
 */
void cs_vocab_free(struct CsVocab *vocab);

/**
 * Loads the encoder of a pretraining or fine-tuning checkpoint. The
 * checkpoint must have been trained with `vocab`, which is copied into the
 * handle. Release with [`cs_encoder_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string, `vocab` a live vocabulary handle
 * and `out` a valid pointer.
 */
enum CsStatus cs_encoder_load(const char *path,
                              const struct CsVocab *vocab,
                              struct CsEncoder **out);

/**
 * Embedding width, or 0 for NULL.
 *
 * # Safety
 * `encoder` must be NULL or a live encoder handle.
 */
size_t cs_encoder_dim(const struct CsEncoder *encoder);

/**
 * # Safety
 * `encoder` must be NULL or a handle from [`cs_encoder_load`] not freed
 * before.
 */
void cs_encoder_free(struct CsEncoder *encoder);

/**
 * Writes the pooled embedding of `text` into `out`, which holds `capacity`
 * floats. `pooling` is a [`CsPooling`] value. `written` receives the
 * embedding width, also when `capacity` is too small.
 *
 * # Safety
 * `encoder` must be a live handle, `text` NUL-terminated, `out` valid for
 * `capacity` writes and `written` a valid pointer.
 */
enum CsStatus cs_embed(const struct CsEncoder *encoder,
                       const char *text,
                       int32_t pooling,
                       float *out,
                       size_t capacity,
                       size_t *written);

/**
 * Cosine similarity of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must be valid for `len` reads and `out` a valid pointer.
 */
enum CsStatus cs_cosine(const double *a, const double *b, size_t len, double *out);

/**
 * Mean squared distance between unit-normalised rows `x[i]` and `y[i]`;
 * both are row-major `n × d`.
 *
 * # Safety
 * `x` and `y` must be valid for `n·d` reads and `out` a valid pointer.
 */
enum CsStatus cs_alignment(const double *x, const double *y, size_t n, size_t d, double *out);

/**
 * Uniformity of the unit-normalised rows of row-major `n × d` `x`.
 *
 * # Safety
 * `x` must be valid for `n·d` reads and `out` a valid pointer.
 */
enum CsStatus cs_uniformity(const double *x, size_t n, size_t d, double *out);

/**
 * Accuracy@K for `n` claims (`n × d`) that each rank their own `m`
 * candidates (`n × m × d`) by cosine similarity; `gold[i] < m`.
 *
 * # Safety
 * Buffers must be valid for the stated sizes and `out` a valid pointer.
 */
enum CsStatus cs_accuracy_at_topk(const double *claims,
                                  const double *candidates,
                                  const size_t *gold,
                                  size_t n,
                                  size_t m,
                                  size_t d,
                                  size_t k,
                                  double *out);

/**
 * Contrastive loss of row-major `n × d` anchors, positives and hard
 * negatives at temperature `tau`.
 *
 * # Safety
 * The three inputs must be valid for `n·d` reads and `out` a valid pointer.
 */
enum CsStatus cs_contrastive_loss(const double *anchors,
                                  const double *positives,
                                  const double *negatives,
                                  size_t n,
                                  size_t d,
                                  double tau,
                                  double *out);

/**
 * Builds contrastive triples from an NLI JSON-lines file, writing them to
 * `triples_path` and the per-source counts to `stats_path`. `count`, when
 * not NULL, receives the number of triples.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `count` NULL or a valid pointer.
 */
enum CsStatus cs_prepare(const char *nli_path,
                         const char *triples_path,
                         const char *stats_path,
                         size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTRASENT_H */
