#ifndef NARRATIVE_SEQ_H
#define NARRATIVE_SEQ_H

#include <stddef.h>
#include <stdint.h>

#define NS_NUM_CLASSES 4

#define NS_CONFUSION_LEN 16

#define NS_AVERAGING_MACRO 0

#define NS_AVERAGING_WEIGHTED 1

// Result of every fallible call.
typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_ARGUMENT = 1,
  NS_STATUS_INVALID_UTF8 = 2,
  NS_STATUS_INVALID_ARGUMENT = 3,
  NS_STATUS_IO = 4,
  NS_STATUS_CHECKPOINT = 5,
  NS_STATUS_DATA = 6,
  NS_STATUS_PANIC = 7,
} NsStatus;

// A checkpoint paired with the text pipeline it was trained on.
typedef struct NsClassifier NsClassifier;

// Aggregate and per-class metrics. Per-class arrays are indexed by label
// code (0 Destroyed, 1 Substantial, 2 Minor, 3 None); `confusion` is
// row-major `[true][predicted]`.
typedef struct NsMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  double class_precision[NS_NUM_CLASSES];
  double class_recall[NS_NUM_CLASSES];
  double class_f1[NS_NUM_CLASSES];
  uint64_t class_support[NS_NUM_CLASSES];
  uint64_t confusion[NS_CONFUSION_LEN];
} NsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ns_version(void);

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into this library from the same thread.
const char *ns_last_error_message(void);

// Loads a checkpoint and the encoded directory (its `vocab.json` and
// `pipeline.json`) it was trained on. Fails with `NS_STATUS_CHECKPOINT` if
// the vocabulary fingerprints differ.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
enum NsStatus ns_classifier_open(const char *checkpoint_path,
                                 const char *encoded_dir,
                                 struct NsClassifier **out);

// Releases a classifier. NULL is ignored.
//
// # Safety
// `c` must come from [`ns_classifier_open`] and not be used afterwards.
void ns_classifier_free(struct NsClassifier *c);

// Model name (e.g. "GRU-BLSTM"), owned by the classifier.
//
// # Safety
// `c` must be a live classifier or NULL.
const char *ns_classifier_model_name(const struct NsClassifier *c);

// Sequence length used when encoding text; 0 for NULL.
//
// # Safety
// `c` must be a live classifier or NULL.
size_t ns_classifier_seq_len(const struct NsClassifier *c);

// Vocabulary size including the padding and OOV ids; 0 for NULL.
//
// # Safety
// `c` must be a live classifier or NULL.
size_t ns_classifier_vocab_size(const struct NsClassifier *c);

// Class probabilities for an already encoded id sequence. Ids are used as
// given (no padding or truncation). `out_probs` receives 4 values and
// `out_label` the argmax code; either may be NULL.
//
// # Safety
// `ids` must point to `len` readable values; outputs must be writable.
enum NsStatus ns_classifier_predict_ids(const struct NsClassifier *c,
                                        const uint32_t *ids,
                                        size_t len,
                                        double *out_probs,
                                        int32_t *out_label);

// Runs raw narrative text through the classifier's text pipeline and
// predicts. Outputs as for [`ns_classifier_predict_ids`].
//
// # Safety
// `text` must be a NUL-terminated string; outputs must be writable.
enum NsStatus ns_classifier_predict_text(const struct NsClassifier *c,
                                         const char *text,
                                         double *out_probs,
                                         int32_t *out_label);

// Metrics over `n` (prediction, label) code pairs, each in 0..=3.
// `averaging` is `NS_AVERAGING_MACRO` or `NS_AVERAGING_WEIGHTED`.
//
// # Safety
// `preds` and `labels` must each point to `n` values; `out` must be
// writable.
enum NsStatus ns_compute_metrics(const int32_t *preds,
                                 const int32_t *labels,
                                 size_t n,
                                 uint32_t averaging,
                                 struct NsMetrics *out);

// Lowercases and strips punctuation and digits, as the first stage of the
// text pipeline. Free the result with [`ns_string_free`].
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum NsStatus ns_normalize_text(const char *text, char **out);

// Full token pipeline with the built-in English stoplist; tokens are joined
// by single spaces. Free the result with [`ns_string_free`].
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum NsStatus ns_preprocess_text(const char *text, char **out);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void ns_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NARRATIVE_SEQ_H */
