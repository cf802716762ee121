#ifndef GEOMIX_H
#define GEOMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GeomixModelKind {
  GEOMIX_MODEL_KIND_REGRESSION = 0,
  GEOMIX_MODEL_KIND_MDN = 1,
  GEOMIX_MODEL_KIND_MDN_SHARED = 2,
  GEOMIX_MODEL_KIND_DIALECT = 3,
} GeomixModelKind;

typedef enum GeomixRule {
  GEOMIX_RULE_STRONGEST_PI = 0,
  GEOMIX_RULE_MAX_MIXTURE_PROB = 1,
} GeomixRule;

typedef enum GeomixStatus {
  GEOMIX_STATUS_OK = 0,
  GEOMIX_STATUS_NULL_POINTER = 1,
  GEOMIX_STATUS_INVALID_ARGUMENT = 2,
  GEOMIX_STATUS_IO = 3,
  GEOMIX_STATUS_LOAD = 4,
  GEOMIX_STATUS_DOMAIN = 5,
  GEOMIX_STATUS_WRONG_MODEL = 6,
  GEOMIX_STATUS_NO_FEATURES = 7,
  GEOMIX_STATUS_BUFFER_TOO_SMALL = 8,
  GEOMIX_STATUS_UNKNOWN_WORD = 9,
  GEOMIX_STATUS_INTERNAL = 10,
  GEOMIX_STATUS_PANIC = 11,
} GeomixStatus;

// A loaded checkpoint plus its vocabulary.
typedef struct GeomixModel GeomixModel;

// One mixture component, in degrees.
typedef struct GeomixComponent {
  double weight;
  double mu_lat;
  double mu_lon;
  double sigma_lat;
  double sigma_lon;
  double rho;
} GeomixComponent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Owned by the
// library; valid until the next call on the same thread.
const char *geomix_last_error(void);

// Static, nul-terminated version string.
const char *geomix_version(void);

// Loads a checkpoint. `vocab_path` may be null, in which case the
// vocabulary is read from `<checkpoint>.vocab.tsv`.
//
// # Safety
// Strings must be nul-terminated; `out_model` must be writable.
enum GeomixStatus geomix_model_load(const char *checkpoint_path,
                                    const char *vocab_path,
                                    struct GeomixModel **out_model);

// # Safety
// `model` must come from [`geomix_model_load`] and not be freed twice.
void geomix_model_free(struct GeomixModel *model);

// # Safety
// `model` must be a live handle; `out_kind` must be writable.
enum GeomixStatus geomix_model_kind(const struct GeomixModel *model,
                                    enum GeomixModelKind *out_kind);

// Number of mixture components (0 for regression).
//
// # Safety
// `model` must be a live handle; `out_k` must be writable.
enum GeomixStatus geomix_model_k(const struct GeomixModel *model, size_t *out_k);

// # Safety
// `model` must be a live handle; `out_size` must be writable.
enum GeomixStatus geomix_model_vocab_size(const struct GeomixModel *model, size_t *out_size);

// Point prediction for one text. Returns `NoFeatures` when no token is in
// the vocabulary.
//
// # Safety
// `model` must be a live handle, `text` nul-terminated, outputs writable.
enum GeomixStatus geomix_predict(const struct GeomixModel *model,
                                 const char *text,
                                 enum GeomixRule rule,
                                 double *out_lat,
                                 double *out_lon);

// Writes the K components of the predictive mixture in model order. If
// `capacity` is below K nothing is written, `*out_len` is set to K and
// `BufferTooSmall` is returned.
//
// # Safety
// `buf` must hold `capacity` elements (may be null when `capacity` is 0).
enum GeomixStatus geomix_mixture(const struct GeomixModel *model,
                                 const char *text,
                                 struct GeomixComponent *buf,
                                 size_t capacity,
                                 size_t *out_len);

// log P(word | location) from a dialect checkpoint. Words are lowercased.
//
// # Safety
// `model` must be a live handle, `word` nul-terminated, `out` writable.
enum GeomixStatus geomix_word_log_prob(const struct GeomixModel *model,
                                       const char *word,
                                       double lat,
                                       double lon,
                                       double *out_log_prob);

// Great-circle distance in km. NaN if any input is NaN.
double geomix_haversine_km(double lat1, double lon1, double lat2, double lon2);

// Log density of a bivariate Gaussian at (x_lat, x_lon).
//
// # Safety
// `out_value` must be writable.
enum GeomixStatus geomix_log_pdf(double mu_lat,
                                 double mu_lon,
                                 double sigma_lat,
                                 double sigma_lon,
                                 double rho,
                                 double x_lat,
                                 double x_lon,
                                 double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOMIX_H */
