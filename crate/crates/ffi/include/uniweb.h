#ifndef UNIWEB_H
#define UNIWEB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum UwStatus {
  UW_STATUS_OK = 0,
  // A null pointer, bad UTF-8 or an out-of-range option.
  UW_STATUS_INVALID_ARGUMENT = 1,
  // Input data failed validation.
  UW_STATUS_VALIDATION = 2,
  UW_STATUS_IO = 3,
  // The value is mathematically undefined for these inputs.
  UW_STATUS_UNDEFINED = 4,
  UW_STATUS_PANIC = 5,
} UwStatus;

// Flag attached to an internal/general ratio.
typedef enum UwConsistency {
  UW_CONSISTENCY_CONSISTENT = 0,
  UW_CONSISTENCY_INCONSISTENT = 1,
  UW_CONSISTENCY_UNDEFINED_RATIO = 2,
} UwConsistency;

typedef enum UwPcaMode {
  UW_PCA_MODE_CORRELATION = 0,
  UW_PCA_MODE_COVARIANCE = 1,
} UwPcaMode;

// Opaque registry handle.
typedef struct UwRegistry UwRegistry;

typedef struct UwPca {
  // Row-major: `components[2 * k + j]` is loading j of component k.
  double components[4];
  double eigenvalues[2];
  double explained_variance[2];
} UwPca;

typedef struct UwRegistrySummary {
  size_t universities;
  size_t units;
  size_t excluded_units;
  size_t admitted_urls;
  size_t rejected_urls;
} UwRegistrySummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy of the last error message on this thread, or null when the last
// call succeeded. Free it with `uw_string_free`.
char *uw_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void uw_string_free(char *s);

// Compound per-period growth in percent. `UW_STATUS_UNDEFINED` when `first` is 0.
//
// # Safety
// `out` must point to writable memory for one double.
enum UwStatus uw_growth_rate(double first, double last, uint32_t periods, double *out);

// Visibility per page. `UW_STATUS_UNDEFINED` when size is zero.
//
// # Safety
// `out` must point to writable memory for one double.
enum UwStatus uw_wif(double size, double visibility, double *out);

// Internal over general size in percent, with its consistency flag.
// When general is zero the ratio is left untouched and the status is
// `UW_STATUS_UNDEFINED`; the flag is still written.
//
// # Safety
// `out_percent` and `out_flag` must point to writable memory.
enum UwStatus uw_internal_general_ratio(double internal,
                                        double general,
                                        double *out_percent,
                                        enum UwConsistency *out_flag);

// Spearman rank correlation of two equal-length arrays (average ranks for
// ties). `UW_STATUS_UNDEFINED` when either array is constant.
//
// # Safety
// `x` and `y` must each point to `n` readable doubles.
enum UwStatus uw_spearman(const double *x, const double *y, size_t n, double *out);

// Two-variable principal components of the points `(x[i], y[i])`.
//
// # Safety
// `x` and `y` must each point to `n` readable doubles; `out` must be
// writable.
enum UwStatus uw_pca(const double *x,
                     const double *y,
                     size_t n,
                     enum UwPcaMode mode,
                     struct UwPca *out);

// Loads and validates a registry file (`.json` as JSON, anything else as
// CSV). On success `*out` owns a handle to release with `uw_registry_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum UwStatus uw_registry_load(const char *path, struct UwRegistry **out);

// # Safety
// `registry` must be a live handle; `out` must be writable.
enum UwStatus uw_registry_summary(const struct UwRegistry *registry, struct UwRegistrySummary *out);

// Content hash of the registry as a new string.
//
// # Safety
// `registry` must be a live handle; `out` must be writable.
enum UwStatus uw_registry_hash(const struct UwRegistry *registry, char **out);

// # Safety
// `registry` must be null or a handle from `uw_registry_load`, freed once.
void uw_registry_free(struct UwRegistry *registry);

// Builds the full report with default options from the snapshots found at
// `snapshots` (a file or directory) and writes it to `out_dir`. The run
// hash is returned through `out_run_hash` when that pointer is not null.
//
// # Safety
// `registry` must be a live handle; the paths must be NUL-terminated
// strings; `out_run_hash` must be null or writable.
enum UwStatus uw_report_run(const struct UwRegistry *registry,
                            const char *snapshots,
                            const char *out_dir,
                            char **out_run_hash);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNIWEB_H */
