#ifndef QADAPT_H
#define QADAPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QadaptStatus {
  QADAPT_STATUS_OK = 0,
  QADAPT_STATUS_NULL_POINTER = 1,
  // Bad UTF-8, an out-of-range index or a malformed JSON argument.
  QADAPT_STATUS_INVALID_ARGUMENT = 2,
  QADAPT_STATUS_IO = 3,
  // Input files or values that violate the data model.
  QADAPT_STATUS_INVALID_DATA = 4,
  // Training or evaluation failed.
  QADAPT_STATUS_RUNTIME = 5,
  QADAPT_STATUS_PANIC = 6,
} QadaptStatus;

// A question/answer corpus.
typedef struct QadaptCorpus QadaptCorpus;

// A span-extraction model.
typedef struct QadaptModel QadaptModel;

// Answer-length importance weights with the two histograms behind them.
typedef struct QadaptWeightTable QadaptWeightTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next qadapt call on the same thread.
const char *qadapt_last_error(void);

// Library version as a static string.
const char *qadapt_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void qadapt_string_free(char *s);

// SQuAD token F1 between two answers.
//
// # Safety
// `prediction` and `gold` must be NUL-terminated strings; `out_f1` must be writable.
enum QadaptStatus qadapt_token_f1(const char *prediction, const char *gold, double *out_f1);

// 1.0 when both answers normalize to the same tokens, else 0.0.
//
// # Safety
// As for [`qadapt_token_f1`].
enum QadaptStatus qadapt_exact_match(const char *prediction, const char *gold, double *out_em);

// Loads a SQuAD JSON or canonical JSONL corpus.
//
// # Safety
// `path` must be a NUL-terminated string; `out_corpus` must be writable.
enum QadaptStatus qadapt_corpus_load(const char *path, struct QadaptCorpus **out_corpus);

// Generates a synthetic corpus from a JSON domain spec.
//
// # Safety
// `spec_json` must be a NUL-terminated string; `out_corpus` must be writable.
enum QadaptStatus qadapt_corpus_generate(const char *spec_json, struct QadaptCorpus **out_corpus);

// Writes the corpus as canonical JSONL.
//
// # Safety
// `corpus` must be a live handle and `path` a NUL-terminated string.
enum QadaptStatus qadapt_corpus_save(const struct QadaptCorpus *corpus, const char *path);

// Number of pairs, or 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live handle.
size_t qadapt_corpus_len(const struct QadaptCorpus *corpus);

// # Safety
// `corpus` must be null or a handle not yet freed.
void qadapt_corpus_free(struct QadaptCorpus *corpus);

// Importance weights `min(cap, p_t / p_s)` over answer length.
//
// # Safety
// `source` and `target` must be live handles; `out_table` must be writable.
enum QadaptStatus qadapt_weights_compute(const struct QadaptCorpus *source,
                                         const struct QadaptCorpus *target,
                                         double cap,
                                         struct QadaptWeightTable **out_table);

// Number of bins, or 0 for a null handle.
//
// # Safety
// `table` must be null or a live handle.
size_t qadapt_weights_bins(const struct QadaptWeightTable *table);

// Bin `index`: its edges and weight. Any out-pointer may be null.
//
// # Safety
// `table` must be a live handle; non-null out-pointers must be writable.
enum QadaptStatus qadapt_weights_bin(const struct QadaptWeightTable *table,
                                     size_t index,
                                     double *out_lo,
                                     double *out_hi,
                                     double *out_weight);

// Weight of an answer of `length` words.
//
// # Safety
// `table` must be a live handle; `out_weight` must be writable.
enum QadaptStatus qadapt_weights_for_length(const struct QadaptWeightTable *table,
                                            double length,
                                            double *out_weight);

// # Safety
// `table` must be null or a handle not yet freed.
void qadapt_weights_free(struct QadaptWeightTable *table);

// Trains a new model on `corpus`. `config_json` holds optional `model` and
// `train` sections (null for defaults); `weights` may be null.
//
// # Safety
// Handles must be live; strings NUL-terminated or null; `out_model` writable.
enum QadaptStatus qadapt_model_train(const struct QadaptCorpus *corpus,
                                     const char *config_json,
                                     const struct QadaptWeightTable *weights,
                                     struct QadaptModel **out_model);

// Fine-tunes a copy of `base` on `corpus`. `train_json` is a training
// config (null for two plain epochs).
//
// # Safety
// As for [`qadapt_model_train`].
enum QadaptStatus qadapt_model_finetune(const struct QadaptModel *base,
                                        const struct QadaptCorpus *corpus,
                                        const char *train_json,
                                        struct QadaptModel **out_model);

// # Safety
// `path` must be a NUL-terminated string; `out_model` must be writable.
enum QadaptStatus qadapt_model_load(const char *path, struct QadaptModel **out_model);

// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum QadaptStatus qadapt_model_save(const struct QadaptModel *model, const char *path);

// Mean F1 and EM over `corpus`. Either out-pointer may be null.
//
// # Safety
// Handles must be live; non-null out-pointers must be writable.
enum QadaptStatus qadapt_model_evaluate(const struct QadaptModel *model,
                                        const struct QadaptCorpus *corpus,
                                        double *out_f1,
                                        double *out_em);

// Extracts an answer span from `context`. The returned string must be
// released with [`qadapt_string_free`].
//
// # Safety
// `model` must be a live handle, the strings NUL-terminated, `out_answer` writable.
enum QadaptStatus qadapt_model_predict(const struct QadaptModel *model,
                                       const char *question,
                                       const char *context,
                                       char **out_answer);

// # Safety
// `model` must be null or a handle not yet freed.
void qadapt_model_free(struct QadaptModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QADAPT_H */
