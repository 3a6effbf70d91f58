#ifndef NCGOPT_H
#define NCGOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of a library call. Zero is success.
typedef enum NcgStatus {
  NCG_STATUS_OK = 0,
  // A required pointer argument was null.
  NCG_STATUS_NULL_POINTER = 1,
  // A string was not UTF-8, a length did not match, or a name is unknown.
  NCG_STATUS_INVALID_ARGUMENT = 2,
  NCG_STATUS_BUFFER_TOO_SMALL = 3,
  // Tolerances or run controls are invalid.
  NCG_STATUS_CONFIG = 4,
  NCG_STATUS_INPUT = 5,
  // The objective returned a non-finite value.
  NCG_STATUS_ORACLE = 6,
  NCG_STATUS_DIVERGENCE = 7,
  // The run exceeded its iteration cap.
  NCG_STATUS_BOUND_EXCEEDED = 8,
  // The objective increased; the declared smoothness constants are wrong.
  NCG_STATUS_CONSTANTS = 9,
  NCG_STATUS_CERTIFICATION_UNAVAILABLE = 10,
  NCG_STATUS_NUMERICAL = 11,
  NCG_STATUS_IO = 12,
  // A panic inside the library was caught.
  NCG_STATUS_PANIC = 13,
} NcgStatus;

// A built problem with its default starting point.
typedef struct NcgProblem NcgProblem;

// The outcome of one solver run.
typedef struct NcgReport NcgReport;

// Run controls. Start from [`ncg_solve_options_default`] and override.
typedef struct NcgSolveOptions {
  double eps1;
  double eps2;
  // When finite, `eps2` is replaced by `eps1^alpha`. NaN leaves it unset.
  double alpha;
  double delta;
  uint64_t seed;
  // Iteration cap; 0 means twice the theoretical bound.
  uint64_t max_iters;
  // Declared gap `f(x0) - f*`; NaN derives it from the problem.
  double delta_gap;
  // Gradient and Hessian sample sizes for SNCG; 0 means the theoretical
  // size.
  uint64_t s1;
  uint64_t s2;
} NcgSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ncg_version(void);

// Message of the last failed call on this thread, or NULL when the last
// status-returning call succeeded. Valid until the next library call on
// this thread.
const char *ncg_last_error(void);

// Builds a registry problem (`"trig"`, `"matfac"`, `"finitesum-sigmoid"`).
// `dim` 0 selects the default size. `seed` drives instance generation and
// the starting point.
//
// # Safety
// `key` must be a NUL-terminated string; `out` must be writable.
enum NcgStatus ncg_problem_new(const char *key, size_t dim, uint64_t seed, struct NcgProblem **out);

// Frees a problem. NULL is ignored.
//
// # Safety
// `p` must come from [`ncg_problem_new`] and not be used afterwards.
void ncg_problem_free(struct NcgProblem *p);

// Point dimension of the problem, or 0 for NULL.
//
// # Safety
// `p` must be NULL or a live problem handle.
size_t ncg_problem_dim(const struct NcgProblem *p);

// Copies the default starting point into `out`.
//
// # Safety
// `p` must be a live handle; `out` must hold `len` doubles.
enum NcgStatus ncg_problem_initial_point(const struct NcgProblem *p, double *out, size_t len);

// Objective value at `x`.
//
// # Safety
// `p` must be a live handle; `x` must hold `len` doubles; `value` must be
// writable.
enum NcgStatus ncg_problem_value(const struct NcgProblem *p,
                                 const double *x,
                                 size_t len,
                                 double *value);

// Gradient at `x`, written to `out`.
//
// # Safety
// `p` must be a live handle; `x` must hold `len` doubles and `out`
// `out_len` doubles.
enum NcgStatus ncg_problem_gradient(const struct NcgProblem *p,
                                    const double *x,
                                    size_t len,
                                    double *out,
                                    size_t out_len);

// Defaults: `eps1 = 1e-3`, `eps2 = 1e-2`, `delta = 0.1`, seed 0, caps and
// sample sizes from theory.
struct NcgSolveOptions ncg_solve_options_default(void);

// Runs `algorithm` (`"gd"`, `"ncd"`, `"ncd-matched"`, `"ncg-a1"`,
// `"ncg-a2"`, `"ncg-b1"`, `"ncg-b2"`, `"ih-ncg-a"`, `"sncg"`) from `x0`, or
// from the problem's starting point when `x0` is NULL. `options` NULL means
// [`ncg_solve_options_default`].
//
// # Safety
// `p` must be a live handle, `algorithm` a NUL-terminated string, `x0`
// NULL or `x0_len` doubles, `options` NULL or valid, `out` writable.
enum NcgStatus ncg_solve(const struct NcgProblem *p,
                         const char *algorithm,
                         const struct NcgSolveOptions *options,
                         const double *x0,
                         size_t x0_len,
                         struct NcgReport **out);

// Frees a report. NULL is ignored.
//
// # Safety
// `r` must come from [`ncg_solve`] and not be used afterwards.
void ncg_report_free(struct NcgReport *r);

// Number of trace rows (iterations). 0 for NULL.
//
// # Safety
// `r` must be NULL or a live report handle.
uint64_t ncg_report_iters(const struct NcgReport *r);

// Final objective value; NaN for NULL.
//
// # Safety
// `r` must be NULL or a live report handle.
double ncg_report_f_final(const struct NcgReport *r);

// Total Hessian-vector products, full plus per-component.
//
// # Safety
// `r` must be NULL or a live report handle.
uint64_t ncg_report_hvp_evals(const struct NcgReport *r);

// Total gradient evaluations, full plus per-component.
//
// # Safety
// `r` must be NULL or a live report handle.
uint64_t ncg_report_grad_evals(const struct NcgReport *r);

// 1 if the dense certificate confirms the algorithm's guarantee, 0 if it
// does not, -1 if no certificate was computed (or `r` is NULL).
//
// # Safety
// `r` must be NULL or a live report handle.
int32_t ncg_report_certified(const struct NcgReport *r);

// Copies the final iterate into `out`.
//
// # Safety
// `r` must be a live handle; `out` must hold `len` doubles.
enum NcgStatus ncg_report_final_point(const struct NcgReport *r, double *out, size_t len);

// The full report as JSON, or NULL on failure. Free with
// [`ncg_string_free`].
//
// # Safety
// `r` must be NULL or a live report handle.
char *ncg_report_json(const struct NcgReport *r);

// The per-iteration trace as CSV with a header row, or NULL on failure.
// Free with [`ncg_string_free`].
//
// # Safety
// `r` must be NULL or a live report handle.
char *ncg_report_trace_csv(const struct NcgReport *r);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void ncg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NCGOPT_H */
