#ifndef HOMOSMOOTH_H
#define HOMOSMOOTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

/**
 * Result codes.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  HS_STATUS_INVALID_UTF8 = 3,
  HS_STATUS_INDEX_OUT_OF_RANGE = 4,
  HS_STATUS_DIMENSION_MISMATCH = 5,
  HS_STATUS_NO_HOMOPHONES = 6,
  HS_STATUS_DEGENERATE_VOCABULARY = 7,
  HS_STATUS_PARSE = 8,
  HS_STATUS_IO = 9,
  HS_STATUS_NON_FINITE = 10,
  HS_STATUS_BUFFER_TOO_SMALL = 11,
  HS_STATUS_PANIC = 12,
} HsStatus;

/**
 * Opaque homophone index together with its vocabulary.
 */
typedef struct HsHomophoneIndex HsHomophoneIndex;

/**
 * Opaque smoothing distribution.
 */
typedef struct HsPrior HsPrior;

/**
 * Edit operations between a reference and a hypothesis.
 */
typedef struct HsEditStats {
  size_t substitutions;
  size_t deletions;
  size_t insertions;
  size_t ref_len;
} HsEditStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next call on the same thread.
 */
const char *hs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Uniform prior over `size` classes.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum HsStatus hs_prior_uniform(size_t size, struct HsPrior **out);

/**
 * Homophone prior: 0.6 on `k0`, 0.3 spread over the `n` homophones, 0.1
 * over the rest.
 *
 * # Safety
 * `homophones` must point to `n` readable indices and `out` must be writable.
 */
enum HsStatus hs_prior_homophone(size_t k0,
                                 const size_t *homophones,
                                 size_t n,
                                 size_t size,
                                 struct HsPrior **out);

/**
 * Fuzzy homophone prior over `n` homophones and `m` similar-sounding characters.
 *
 * # Safety
 * `homophones` and `similar` must point to `n` and `m` readable indices;
 * `out` must be writable.
 */
enum HsStatus hs_prior_fuzzy(size_t k0,
                             const size_t *homophones,
                             size_t n,
                             const size_t *similar,
                             size_t m,
                             size_t size,
                             struct HsPrior **out);

/**
 * Number of classes of a prior, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t hs_prior_size(const struct HsPrior *p);

/**
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum HsStatus hs_prior_prob(const struct HsPrior *p, size_t k, double *out);

/**
 * Writes all `size` probabilities into `buf`.
 *
 * # Safety
 * `p` must be a live handle and `buf` must have room for `len` doubles.
 */
enum HsStatus hs_prior_to_dense(const struct HsPrior *p, double *buf, size_t len);

/**
 * Releases a prior. Null is ignored.
 *
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void hs_prior_free(struct HsPrior *p);

/**
 * `-(1 - beta) log p[k0] + beta KL(prior || p)` with `p = softmax(logits)`.
 *
 * # Safety
 * `logits` must point to `len` doubles, `p` must be a live handle and
 * `out` writable.
 */
enum HsStatus hs_ls_loss(const double *logits,
                         size_t len,
                         size_t k0,
                         const struct HsPrior *p,
                         double beta,
                         double *out);

/**
 * Gradient of [`hs_ls_loss`] with respect to the logits, written to `grad`.
 *
 * # Safety
 * `logits` and `grad` must each point to `len` doubles; `p` must be live.
 */
enum HsStatus hs_ls_loss_grad(const double *logits,
                              size_t len,
                              size_t k0,
                              const struct HsPrior *p,
                              double beta,
                              double *grad);

/**
 * Builds a homophone index from a vocabulary file (one symbol per line)
 * and a lexicon TSV.
 *
 * # Safety
 * The paths must be NUL-terminated UTF-8 strings and `out` writable.
 */
enum HsStatus hs_index_load(const char *vocab_path,
                            const char *lexicon_path,
                            bool tone_insensitive,
                            struct HsHomophoneIndex **out);

/**
 * Vocabulary size of an index, or 0 for a null handle.
 *
 * # Safety
 * `idx` must be null or a live handle.
 */
size_t hs_index_vocab_size(const struct HsHomophoneIndex *idx);

/**
 * Vocabulary index of a UTF-8 character (`<unk>` when absent).
 *
 * # Safety
 * `idx` must be live, `ch` a NUL-terminated string holding one character,
 * and `out` writable.
 */
enum HsStatus hs_index_encode_char(const struct HsHomophoneIndex *idx, const char *ch, size_t *out);

/**
 * Homophones of `k0` read as `syllable` (e.g. `"zhong1"`), ascending.
 * `*count` receives the number found; `buf` must hold at least that many
 * entries or the call fails with `BufferTooSmall` (and `*count` still set).
 *
 * # Safety
 * `idx` must be live, `syllable` NUL-terminated, `buf` room for `cap`
 * entries and `count` writable.
 */
enum HsStatus hs_index_homophones(const struct HsHomophoneIndex *idx,
                                  size_t k0,
                                  const char *syllable,
                                  size_t *buf,
                                  size_t cap,
                                  size_t *count);

/**
 * Releases an index. Null is ignored.
 *
 * # Safety
 * `idx` must be null or a handle not yet freed.
 */
void hs_index_free(struct HsHomophoneIndex *idx);

/**
 * Character-level Levenshtein statistics of two UTF-8 strings.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` writable.
 */
enum HsStatus hs_edit_distance(const char *reference,
                               const char *hypothesis,
                               struct HsEditStats *out);

/**
 * Pooled CER in percent over `n` aligned reference/hypothesis strings.
 *
 * # Safety
 * `refs` and `hyps` must each point to `n` NUL-terminated strings and
 * `out` must be writable.
 */
enum HsStatus hs_corpus_cer(const char *const *refs,
                            const char *const *hyps,
                            size_t n,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMOSMOOTH_H */
