#ifndef DPMI_H
#define DPMI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DPMI_OK 0

#define DPMI_ERR_NULL 1

#define DPMI_ERR_INVALID 2

#define DPMI_ERR_RUNTIME 3

#define DPMI_ERR_IO 4

#define DPMI_ERR_UTF8 5

#define DPMI_ERR_PANIC 6

/**
 * Opaque RDP accountant.
 */
typedef struct DpmiAccountant DpmiAccountant;

/**
 * Opaque dataset.
 */
typedef struct DpmiDataset DpmiDataset;

/**
 * Opaque experiment: a validated config and, once run, its results.
 */
typedef struct DpmiExperiment DpmiExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the calling thread's last failure, or null. Valid until the
 * next failing call on the same thread.
 */
const char *dpmi_last_error(void);

/**
 * Randomized-response budget for retention probability `rho`.
 *
 * # Safety
 * `epsilon` must be null or point to writable memory.
 */
int32_t dpmi_rr_budget(double rho, double *epsilon);

/**
 * Retention probability for a per-bit budget.
 *
 * # Safety
 * `rho` must be null or point to writable memory.
 */
int32_t dpmi_rr_retention(double epsilon, double *rho);

/**
 * Sum of `len` per-feature budgets.
 *
 * # Safety
 * `budgets` must point to `len` readable values; `total` must be writable.
 */
int32_t dpmi_compose_local_budget(const double *budgets, size_t len, double *total);

/**
 * Mann-Whitney AUC of `scores` against membership `flags` (non-zero =
 * member).
 *
 * # Safety
 * `scores` and `flags` must point to `len` readable values.
 */
int32_t dpmi_auc(const double *scores, const uint8_t *flags, size_t len, double *auc);

/**
 * Bounded trade-off. `applicable` receives 0 when the reference shows no
 * privacy gap, in which case `value` is left untouched.
 *
 * # Safety
 * `value` and `applicable` must be writable.
 */
int32_t dpmi_phi(double auc_orig,
                 double auc_eps,
                 double acc_orig,
                 double acc_eps,
                 size_t classes,
                 double *value,
                 int32_t *applicable);

/**
 * Accountant for sampling ratio `q` and noise multiplier `z` over the
 * default order grid.
 *
 * # Safety
 * `handle` must be writable; release the result with
 * `dpmi_accountant_free`.
 */
int32_t dpmi_accountant_new(double q, double z, struct DpmiAccountant **handle);

/**
 * # Safety
 * `handle` must come from `dpmi_accountant_new`.
 */
int32_t dpmi_accountant_record_steps(struct DpmiAccountant *handle, uint64_t steps);

/**
 * Smallest epsilon over the order grid at `delta`, and its order.
 *
 * # Safety
 * `handle` must come from `dpmi_accountant_new`; `epsilon` and `order`
 * must be writable (`order` may be null).
 */
int32_t dpmi_accountant_epsilon(const struct DpmiAccountant *handle,
                                double delta,
                                double *epsilon,
                                double *order);

/**
 * # Safety
 * `handle` must be null or come from `dpmi_accountant_new`, and must not
 * be used afterwards.
 */
void dpmi_accountant_free(struct DpmiAccountant *handle);

/**
 * Generates a dataset from a generator spec given as JSON text.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `handle` must be writable.
 */
int32_t dpmi_dataset_generate(const char *spec_json, struct DpmiDataset **handle);

/**
 * Loads a binary-feature CSV dataset.
 *
 * # Safety
 * `path` and `label_column` must be NUL-terminated strings; `handle` must
 * be writable.
 */
int32_t dpmi_dataset_load_binary_csv(const char *path,
                                     const char *label_column,
                                     struct DpmiDataset **handle);

/**
 * Record count, feature width and class count.
 *
 * # Safety
 * `handle` must come from a dataset constructor; out-pointers must be
 * writable.
 */
int32_t dpmi_dataset_shape(const struct DpmiDataset *handle,
                           size_t *records,
                           size_t *width,
                           size_t *classes);

/**
 * # Safety
 * `handle` must come from a dataset constructor; `path` must be a
 * NUL-terminated string.
 */
int32_t dpmi_dataset_save_csv(const struct DpmiDataset *handle, const char *path);

/**
 * # Safety
 * `handle` must be null or come from a dataset constructor, and must not
 * be used afterwards.
 */
void dpmi_dataset_free(struct DpmiDataset *handle);

/**
 * Loads and validates an experiment config file.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `handle` must be
 * writable.
 */
int32_t dpmi_experiment_load(const char *config_path, struct DpmiExperiment **handle);

/**
 * Runs the reference and every grid point on up to `jobs` threads.
 *
 * # Safety
 * `handle` must come from `dpmi_experiment_load`.
 */
int32_t dpmi_experiment_run(struct DpmiExperiment *handle, size_t jobs);

/**
 * Number of result rows produced by the last run.
 *
 * # Safety
 * `handle` must come from `dpmi_experiment_load`; `rows` must be writable.
 */
int32_t dpmi_experiment_row_count(const struct DpmiExperiment *handle, size_t *rows);

/**
 * Writes result files into `dir`. A non-zero `force` replaces rows of the
 * same experiment id.
 *
 * # Safety
 * `handle` must come from `dpmi_experiment_load`; `dir` must be a
 * NUL-terminated string.
 */
int32_t dpmi_experiment_persist(const struct DpmiExperiment *handle,
                                const char *dir,
                                int32_t force);

/**
 * # Safety
 * `handle` must be null or come from `dpmi_experiment_load`, and must not
 * be used afterwards.
 */
void dpmi_experiment_free(struct DpmiExperiment *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPMI_H */
