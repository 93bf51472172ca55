#ifndef FLOQRES_H
#define FLOQRES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum {
  FQ_STATUS_OK = 0,
  FQ_STATUS_NULL_POINTER = 1,
  FQ_STATUS_INVALID_UTF8 = 2,
  FQ_STATUS_CONFIG = 3,
  FQ_STATUS_DOMAIN = 4,
  FQ_STATUS_OVERSIZE = 5,
  FQ_STATUS_RESONANCE = 6,
  FQ_STATUS_REGIME = 7,
  FQ_STATUS_INTEGRATION = 8,
  FQ_STATUS_EMPTY_SECTOR = 9,
  FQ_STATUS_NUMERICAL = 10,
  FQ_STATUS_IO = 11,
  FQ_STATUS_OUT_OF_RANGE = 12,
  FQ_STATUS_PANIC = 13,
} FqStatus;

/**
 * A designed experiment: effective spectrum and resolved cavities.
 */
typedef struct FqDesign FqDesign;

/**
 * A parsed experiment config.
 */
typedef struct FqExperiment FqExperiment;

/**
 * Sampled observables of one run.
 */
typedef struct FqSeries FqSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fq_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fq_version(void);

/**
 * Parse a JSON config (or emitted manifest).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
FqStatus fq_experiment_from_json(const char *json, FqExperiment **out);

/**
 * Load a built-in preset by id.
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
FqStatus fq_experiment_from_preset(const char *id, FqExperiment **out);

/**
 * # Safety
 * `exp` must come from an `fq_experiment_from_*` call, or be null.
 */
void fq_experiment_free(FqExperiment *exp);

/**
 * Override one scalar parameter, using the scan-axis names
 * (`u`, `omega`, `flux`, `t_final`, `seed`, `delta`, `cavity1.kappa`, ...).
 *
 * # Safety
 * `exp` must be a live handle and `name` a NUL-terminated string.
 */
FqStatus fq_experiment_set(FqExperiment *exp, const char *name, double value);

/**
 * Serialize the config back to JSON. The returned string is released with
 * [`fq_string_free`].
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
FqStatus fq_experiment_to_json(const FqExperiment *exp, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void fq_string_free(char *s);

/**
 * Build the effective model and design the cavities. Fails with
 * `Regime` when validation fails and `force` is zero.
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
FqStatus fq_design(const FqExperiment *exp, int32_t force, FqDesign **out);

/**
 * # Safety
 * `d` must come from [`fq_design`], or be null.
 */
void fq_design_free(FqDesign *d);

/**
 * Number of effective eigenstates in the excitation sector.
 *
 * # Safety
 * `d` must be a live handle.
 */
uintptr_t fq_design_n_states(const FqDesign *d);

/**
 * Number of cavities.
 *
 * # Safety
 * `d` must be a live handle.
 */
uintptr_t fq_design_n_cavities(const FqDesign *d);

/**
 * Copy the sorted effective energies into `buf`, which holds `len` values.
 *
 * # Safety
 * `d` must be a live handle and `buf` valid for `len` writes.
 */
FqStatus fq_design_energies(const FqDesign *d, double *buf, uintptr_t len);

/**
 * Designed detuning and mean photon number of one cavity.
 *
 * # Safety
 * `d` must be a live handle; `detuning` and `nbar` valid pointers.
 */
FqStatus fq_design_cavity(const FqDesign *d, uintptr_t cavity, double *detuning, double *nbar);

/**
 * Propagate the experiment. `force` has the same meaning as in
 * [`fq_design`].
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
FqStatus fq_run(const FqExperiment *exp, int32_t force, FqSeries **out);

/**
 * # Safety
 * `s` must come from [`fq_run`], or be null.
 */
void fq_series_free(FqSeries *s);

/**
 * # Safety
 * `s` must be a live handle.
 */
uintptr_t fq_series_n_times(const FqSeries *s);

/**
 * # Safety
 * `s` must be a live handle.
 */
uintptr_t fq_series_n_columns(const FqSeries *s);

/**
 * Column name, owned by the series handle; null when out of range.
 *
 * # Safety
 * `s` must be a live handle.
 */
const char *fq_series_column_name(const FqSeries *s, uintptr_t col);

/**
 * Copy the sample times into `buf` (`len` values).
 *
 * # Safety
 * `s` must be a live handle and `buf` valid for `len` writes.
 */
FqStatus fq_series_times(const FqSeries *s, double *buf, uintptr_t len);

/**
 * Copy one column, and optionally its standard errors, over all sample
 * times. `se` may be null.
 *
 * # Safety
 * `s` must be a live handle; `values` and non-null `se` valid for `len`
 * writes.
 */
FqStatus fq_series_column(const FqSeries *s,
                          uintptr_t col,
                          double *values,
                          double *se,
                          uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOQRES_H */
