/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef FLOWLENS_H
#define FLOWLENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_IO = 3,
  /**
   * Malformed model, table or profile.
   */
  FL_STATUS_FORMAT = 4,
  /**
   * A model does not fit the features it is given.
   */
  FL_STATUS_SCHEMA = 5,
  /**
   * The output buffer is too small; the required size was written.
   */
  FL_STATUS_BUFFER_TOO_SMALL = 6,
  FL_STATUS_PANIC = 7,
} FlStatus;

typedef enum FlProfile {
  FL_PROFILE_SQLI = 0,
  FL_PROFILE_XSS = 1,
} FlProfile;

typedef enum FlVerdict {
  FL_VERDICT_BENIGN = 0,
  FL_VERDICT_SQLI = 1,
  FL_VERDICT_XSS = 2,
} FlVerdict;

/**
 * SQLi/XSS detector owning its tables and model.
 */
typedef struct FlDetector FlDetector;

/**
 * Compiled token table.
 */
typedef struct FlDfa FlDfa;

/**
 * Random-forest model.
 */
typedef struct FlModel FlModel;

/**
 * Token `id` spanning bytes `start..end` of the input.
 */
typedef struct FlToken {
  uint32_t id;
  size_t start;
  size_t end;
} FlToken;

typedef struct FlDetection {
  enum FlVerdict verdict;
  double confidence;
  size_t tokens;
  double latency_us;
} FlDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * successful one. Valid until the next fallible call on the same thread.
 */
const char *fl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * Adds the 16-bin histogram of `values` into `out`, with
 * `bin(x) = min(x / bin_width, 15)`.
 *
 * # Safety
 * `values` must point to `n` readable values and `out` to 16 writable counters.
 */
enum FlStatus fl_hist16(const uint32_t *values, size_t n, uint32_t bin_width, uint64_t *out);

/**
 * Category (1 to 4) of sixteen bin indices.
 *
 * # Safety
 * `bins` must point to 16 readable values and `category` must be writable.
 */
enum FlStatus fl_hist_category(const uint32_t *bins, uint8_t *category);

/**
 * Compiles profile source text into a token table.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `dfa` writable.
 */
enum FlStatus fl_dfa_compile(const char *text, struct FlDfa **dfa);

/**
 * Loads a table from its binary dump.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `dfa` be writable.
 */
enum FlStatus fl_dfa_load(const uint8_t *data, size_t len, struct FlDfa **dfa);

/**
 * One of the built-in tables.
 *
 * # Safety
 * `dfa` must be writable.
 */
enum FlStatus fl_dfa_bundled(enum FlProfile which, struct FlDfa **dfa);

/**
 * Writes the binary dump into `buf`. `len` receives the dump size; if it
 * exceeds `cap` nothing is written and `BufferTooSmall` is returned.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
 */
enum FlStatus fl_dfa_dump(const struct FlDfa *dfa, uint8_t *buf, size_t cap, size_t *len);

/**
 * Number of token ids in the table.
 *
 * # Safety
 * `dfa` must be a live handle or null (which yields 0).
 */
size_t fl_dfa_token_count(const struct FlDfa *dfa);

/**
 * Copies the NUL-terminated name of token `id` into `buf`. `len` receives
 * the size including the terminator.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
 */
enum FlStatus fl_dfa_token_name(const struct FlDfa *dfa,
                                uint32_t id,
                                char *buf,
                                size_t cap,
                                size_t *len);

/**
 * Tokenizes `input` into `tokens`. `n` receives the token count; if it
 * exceeds `cap` no tokens are written and `BufferTooSmall` is returned.
 *
 * # Safety
 * `input` must point to `len` readable bytes and `tokens` to `cap` writable
 * entries (or be null when `cap` is 0).
 */
enum FlStatus fl_dfa_tokenize(const struct FlDfa *dfa,
                              const uint8_t *input,
                              size_t len,
                              struct FlToken *tokens,
                              size_t cap,
                              size_t *n);

/**
 * Releases a table. Null is ignored.
 *
 * # Safety
 * `dfa` must come from this library and not be used afterwards.
 */
void fl_dfa_free(struct FlDfa *dfa);

/**
 * Loads a model from its serialized bytes.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `model` be writable.
 */
enum FlStatus fl_model_load(const uint8_t *data, size_t len, struct FlModel **model);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `model` be writable.
 */
enum FlStatus fl_model_load_file(const char *path, struct FlModel **model);

/**
 * Number of input features, or 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t fl_model_n_features(const struct FlModel *model);

/**
 * Number of classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t fl_model_n_classes(const struct FlModel *model);

/**
 * Copies the NUL-terminated name of class `id` into `buf`. `len` receives
 * the size including the terminator.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
 */
enum FlStatus fl_model_class_name(const struct FlModel *model,
                                  size_t id,
                                  char *buf,
                                  size_t cap,
                                  size_t *len);

/**
 * Predicts one row. `probs` receives one probability per class and
 * `class` the most probable class id (lowest id on ties).
 *
 * # Safety
 * `x` must point to `n` readable values, `probs` to `n_probs` writable
 * values, and `class` be writable.
 */
enum FlStatus fl_model_predict(const struct FlModel *model,
                               const double *x,
                               size_t n,
                               double *probs,
                               size_t n_probs,
                               size_t *class_);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void fl_model_free(struct FlModel *model);

/**
 * Detector with the built-in tables and the model trained on the built-in
 * corpus. The first call trains that model, which takes a fraction of a
 * second.
 *
 * # Safety
 * `detector` must be writable.
 */
enum FlStatus fl_detector_bundled(double threshold, struct FlDetector **detector);

/**
 * Detector from custom tables and a model trained on their features. The
 * handles are copied and may be freed afterwards.
 *
 * # Safety
 * All handles must be live and `detector` writable.
 */
enum FlStatus fl_detector_new(const struct FlDfa *sqli,
                              const struct FlDfa *xss,
                              const struct FlModel *model,
                              double threshold,
                              struct FlDetector **detector);

/**
 * Classifies one payload. Set `url_decode` to decode `%XX` escapes first.
 *
 * # Safety
 * `payload` must point to `len` readable bytes and `result` be writable.
 */
enum FlStatus fl_detector_detect(const struct FlDetector *detector,
                                 const uint8_t *payload,
                                 size_t len,
                                 bool url_decode,
                                 struct FlDetection *result);

/**
 * Releases a detector. Null is ignored.
 *
 * # Safety
 * `detector` must come from this library and not be used afterwards.
 */
void fl_detector_free(struct FlDetector *detector);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWLENS_H */
