#ifndef DGCM_H
#define DGCM_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DgcmStatus {
  DGCM_STATUS_OK = 0,
  DGCM_STATUS_NULL_POINTER = 1,
  DGCM_STATUS_INVALID_ARGUMENT = 2,
  DGCM_STATUS_DATA_ERROR = 3,
  DGCM_STATUS_NUMERICAL_ERROR = 4,
  DGCM_STATUS_PANIC = 5,
} DgcmStatus;

typedef enum DgcmRole {
  DGCM_ROLE_X = 0,
  DGCM_ROLE_Y = 1,
  DGCM_ROLE_Z = 2,
} DgcmRole;

typedef enum DgcmFamily {
  DGCM_FAMILY_MAX_PARTIAL_SUM = 0,
  DGCM_FAMILY_FULL_SUM = 1,
} DgcmFamily;

typedef enum DgcmNorm {
  DGCM_NORM_L2 = 0,
  DGCM_NORM_MAX = 1,
} DgcmNorm;

/**
 * Opaque hypothesis under construction.
 */
typedef struct DgcmHypothesis DgcmHypothesis;

/**
 * Opaque panel of X, Y and Z series.
 */
typedef struct DgcmPanel DgcmPanel;

/**
 * Test settings. `window == 0` selects the lag window automatically;
 * `time_basis == 0` selects the basis counts by cross-validation.
 * Role and family fields hold the integer values of the enums above.
 */
typedef struct DgcmTestConfig {
  double alpha;
  size_t sims;
  uint64_t seed;
  uint32_t family;
  uint32_t norm;
  size_t window;
  size_t delta;
  size_t time_basis;
  size_t cov_basis;
  size_t gamma;
} DgcmTestConfig;

typedef struct DgcmReport {
  double statistic;
  double quantile;
  double p_value;
  bool reject;
  size_t window;
  size_t window_times;
  size_t dim;
} DgcmReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *dgcm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dgcm_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DgcmStatus dgcm_panel_new(size_t n, struct DgcmPanel **out);

/**
 * Appends one series of `len` values for `role` (see [`DgcmRole`]).
 *
 * # Safety
 * `panel` must come from [`dgcm_panel_new`]; `label` must be a
 * NUL-terminated string or NULL; `values` must point to `len` doubles.
 */
enum DgcmStatus dgcm_panel_add_series(struct DgcmPanel *panel,
                                      uint32_t role,
                                      const char *label,
                                      const double *values,
                                      size_t len);

/**
 * # Safety
 * `panel` must come from [`dgcm_panel_new`] and not be used afterwards.
 */
void dgcm_panel_free(struct DgcmPanel *panel);

/**
 * Starts a hypothesis; with `conditional` false the conditioning set
 * must stay empty.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DgcmStatus dgcm_hypothesis_new(bool conditional, struct DgcmHypothesis **out);

/**
 * Adds the pair `X[x_dim](t + x_offset)`, `Y[y_dim](t + y_offset)`.
 *
 * # Safety
 * `hypothesis` must come from [`dgcm_hypothesis_new`].
 */
enum DgcmStatus dgcm_hypothesis_add_tuple(struct DgcmHypothesis *hypothesis,
                                          size_t x_dim,
                                          size_t y_dim,
                                          int64_t x_offset,
                                          int64_t y_offset);

/**
 * Conditions on `Z[dim](t + offset)`.
 *
 * # Safety
 * `hypothesis` must come from [`dgcm_hypothesis_new`].
 */
enum DgcmStatus dgcm_hypothesis_add_conditioning(struct DgcmHypothesis *hypothesis,
                                                 size_t dim,
                                                 int64_t offset);

/**
 * # Safety
 * `hypothesis` must come from [`dgcm_hypothesis_new`] and not be used
 * afterwards.
 */
void dgcm_hypothesis_free(struct DgcmHypothesis *hypothesis);

struct DgcmTestConfig dgcm_test_config_default(void);

/**
 * Runs the conditional or unconditional test, as set when the
 * hypothesis was created, and writes the outcome to `out`.
 *
 * # Safety
 * All pointers must be valid; `config` may be NULL for defaults.
 */
enum DgcmStatus dgcm_run(const struct DgcmPanel *panel,
                         const struct DgcmHypothesis *hypothesis,
                         const struct DgcmTestConfig *config,
                         struct DgcmReport *out);

/**
 * Benjamini-Hochberg adjustment of `len` p-values into `out`.
 *
 * # Safety
 * `pvalues` and `out` must each point to `len` doubles.
 */
enum DgcmStatus dgcm_bh_adjust(const double *pvalues, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGCM_H */
