#ifndef FOLIASHADOW_H
#define FOLIASHADOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. `FS_STATUS_OK` and `FS_STATUS_VERIFICATION_FAILED` match
// the CLI exit codes 0 and 1, `FS_STATUS_CONFIG_ERROR` matches 2.
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_VERIFICATION_FAILED = 1,
  FS_STATUS_CONFIG_ERROR = 2,
  FS_STATUS_NULL_POINTER = 3,
  FS_STATUS_INVALID_UTF8 = 4,
  FS_STATUS_INVALID_INPUT = 5,
  FS_STATUS_IO_ERROR = 6,
  FS_STATUS_COMPUTATION_ERROR = 7,
  FS_STATUS_PANIC = 8,
} FsStatus;

typedef enum FsStep {
  FS_STEP_CR_SET = 0,
  FS_STEP_SHADOW = 1,
  FS_STEP_SEMICONJ = 2,
  FS_STEP_EXPANSIVITY_SCAN = 3,
  FS_STEP_QUOTIENT = 4,
  FS_STEP_ALL = 5,
} FsStep;

// A toral automorphism, optionally perturbed.
typedef struct FsMap FsMap;

// The manifest of a finished run.
typedef struct FsReport FsReport;

// A parsed and validated scenario.
typedef struct FsScenario FsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static string.
const char *fs_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *fs_last_error(void);

// Releases a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void fs_string_free(char *s);

// Built-in scenarios as a JSON array of `{"name", "description"}`.
char *fs_list_scenarios(void);

// Parses a TOML scenario.
//
// # Safety
// `text` must be a NUL-terminated string, `out` a valid pointer.
enum FsStatus fs_scenario_from_toml(const char *text, struct FsScenario **out);

// Parses a JSON scenario.
//
// # Safety
// `text` must be a NUL-terminated string, `out` a valid pointer.
enum FsStatus fs_scenario_from_json(const char *text, struct FsScenario **out);

// Loads a scenario file (`.json` or TOML) or `builtin:<name>`.
//
// # Safety
// `path` must be a NUL-terminated string, `out` a valid pointer.
enum FsStatus fs_scenario_load(const char *path, struct FsScenario **out);

// # Safety
// `s` must be NULL or a live handle from this library.
void fs_scenario_free(struct FsScenario *s);

// # Safety
// `s` must be a live handle.
enum FsStatus fs_scenario_set_seed(struct FsScenario *s, uint64_t seed);

// Runs `step` and writes reports into `out_dir`. On `FS_STATUS_OK` and
// `FS_STATUS_VERIFICATION_FAILED` a report handle is stored in `out`.
//
// # Safety
// `s` must be a live handle, `out_dir` a NUL-terminated string and `out`
// a valid pointer.
enum FsStatus fs_run(const struct FsScenario *s,
                     enum FsStep step,
                     const char *out_dir,
                     struct FsReport **out);

// 1 when every step passed, 0 otherwise or for NULL.
//
// # Safety
// `r` must be NULL or a live handle.
int32_t fs_report_passed(const struct FsReport *r);

// Number of steps in the report.
//
// # Safety
// `r` must be NULL or a live handle.
uintptr_t fs_report_step_count(const struct FsReport *r);

// The manifest as JSON, or NULL for a NULL handle.
//
// # Safety
// `r` must be NULL or a live handle.
char *fs_report_manifest_json(const struct FsReport *r);

// # Safety
// `r` must be NULL or a live handle from this library.
void fs_report_free(struct FsReport *r);

// A linear automorphism from a row-major `d × d` integer matrix.
//
// # Safety
// `matrix` must point to `d * d` values, `out` must be valid.
enum FsStatus fs_map_new(const int64_t *matrix, uintptr_t d, struct FsMap **out);

// # Safety
// `m` must be NULL or a live handle.
uintptr_t fs_map_dim(const struct FsMap *m);

// `y = f(x)`; both arrays hold `fs_map_dim(m)` values.
//
// # Safety
// `m` must be a live handle and `x`, `y` valid for `d` doubles.
enum FsStatus fs_map_apply(const struct FsMap *m, const double *x, double *y);

// `y = f^{-1}(x)`.
//
// # Safety
// `m` must be a live handle and `x`, `y` valid for `d` doubles.
enum FsStatus fs_map_apply_inverse(const struct FsMap *m, const double *x, double *y);

// # Safety
// `m` must be NULL or a live handle from this library.
void fs_map_free(struct FsMap *m);

// Flat torus distance between two points of dimension `d`.
//
// # Safety
// `x`, `y` must be valid for `d` doubles and `out` for one.
enum FsStatus fs_torus_dist(const double *x, const double *y, uintptr_t d, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOLIASHADOW_H */
