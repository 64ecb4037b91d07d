#ifndef RISKFIELD_H
#define RISKFIELD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_ARGUMENT = 2,
  RF_STATUS_CONFIG = 3,
  RF_STATUS_NUMERICAL = 4,
  RF_STATUS_IO = 5,
  RF_STATUS_PANIC = 6,
} RfStatus;

/**
 * Posterior summaries of one fitted replicate.
 */
typedef struct RfFit RfFit;

/**
 * Study region with population, partition, evaluation grid and mesh.
 */
typedef struct RfWorkspace RfWorkspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next riskfield call on this thread.
 */
const char *rf_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *rf_version(void);

/**
 * Builds a workspace from a TOML configuration file, or from the built-in
 * defaults when `config_path` is null.
 *
 * # Safety
 * `config_path` is null or a NUL-terminated string; `out` is writable.
 */
enum RfStatus rf_workspace_new(const char *config_path, struct RfWorkspace **out);

/**
 * Builds a workspace from TOML text.
 *
 * # Safety
 * `toml` is a NUL-terminated string; `out` is writable.
 */
enum RfStatus rf_workspace_from_toml(const char *toml, struct RfWorkspace **out);

/**
 * # Safety
 * `ws` is null or a handle from `rf_workspace_new`, not yet freed.
 */
void rf_workspace_free(struct RfWorkspace *ws);

/**
 * Overrides the base simulation seed.
 *
 * # Safety
 * `ws` is a live workspace handle.
 */
enum RfStatus rf_workspace_set_seed(struct RfWorkspace *ws, uint64_t seed);

/**
 * Number of evaluation-grid cells.
 *
 * # Safety
 * `ws` is a live workspace handle; `out` is writable.
 */
enum RfStatus rf_workspace_grid_len(const struct RfWorkspace *ws, size_t *out);

/**
 * Number of areal units in the partition.
 *
 * # Safety
 * `ws` is a live workspace handle; `out` is writable.
 */
enum RfStatus rf_workspace_unit_count(const struct RfWorkspace *ws, size_t *out);

/**
 * Reference rate of the configured scenario.
 *
 * # Safety
 * `ws` is a live workspace handle; `out` is writable.
 */
enum RfStatus rf_workspace_reference_rate(const struct RfWorkspace *ws, double *out);

/**
 * Simulates the configured scenario into `out_dir`; `n_datasets` (may be
 * null) receives the number of replicate files written.
 *
 * # Safety
 * `ws` is a live workspace handle; `out_dir` is a NUL-terminated string.
 */
enum RfStatus rf_simulate(const struct RfWorkspace *ws, const char *out_dir, size_t *n_datasets);

/**
 * Fits every simulated dataset with every configured model using `jobs`
 * threads (0 means all cores); `n_failed` (may be null) receives the
 * number of fits that failed.
 *
 * # Safety
 * `ws` is a live workspace handle; `out_dir` is a NUL-terminated string.
 */
enum RfStatus rf_fit(const struct RfWorkspace *ws,
                     const char *out_dir,
                     size_t jobs,
                     size_t *n_failed);

/**
 * Computes replicate metrics and the scenario summary under `out_dir`.
 *
 * # Safety
 * `ws` is a live workspace handle; `out_dir` is a NUL-terminated string.
 */
enum RfStatus rf_evaluate(const struct RfWorkspace *ws, const char *out_dir);

/**
 * Loads a fit result CSV.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum RfStatus rf_fit_read(const char *path, struct RfFit **out);

/**
 * # Safety
 * `fit` is null or a handle from `rf_fit_read`, not yet freed.
 */
void rf_fit_free(struct RfFit *fit);

/**
 * Number of targets in the fit; 0 for a null handle.
 *
 * # Safety
 * `fit` is null or a live fit handle.
 */
size_t rf_fit_len(const struct RfFit *fit);

/**
 * Number of exceedance thresholds in the fit; 0 for a null handle.
 *
 * # Safety
 * `fit` is null or a live fit handle.
 */
size_t rf_fit_threshold_count(const struct RfFit *fit);

/**
 * Copies the posterior mean risk of every target into `buf`, which must
 * hold exactly `rf_fit_len` values.
 *
 * # Safety
 * `fit` is a live fit handle; `buf` points to `len` writable doubles.
 */
enum RfStatus rf_fit_mean_risk(const struct RfFit *fit, double *buf, size_t len);

/**
 * Copies the exceedance probabilities for threshold number `column`.
 *
 * # Safety
 * `fit` is a live fit handle; `buf` points to `len` writable doubles.
 */
enum RfStatus rf_fit_exceedance(const struct RfFit *fit, size_t column, double *buf, size_t len);

/**
 * Matérn (smoothness 1) covariance at distance `h` for range `rho` and
 * marginal sd `sigma`.
 *
 * # Safety
 * `out` is writable.
 */
enum RfStatus rf_matern_covariance(double h, double rho, double sigma, double *out);

/**
 * Weighted ROC area of `scores` against the 0/1 labels in `truth`, with
 * every distinct score as a cut.
 *
 * # Safety
 * `truth`, `scores` and `weights` point to `n` readable values; `out` is writable.
 */
enum RfStatus rf_roc_auc(const uint8_t *truth,
                         const double *scores,
                         const double *weights,
                         size_t n,
                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKFIELD_H */
