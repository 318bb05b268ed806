#ifndef EXECQUOTE_H
#define EXECQUOTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum ExqStatus {
  EXQ_STATUS_OK = 0,
  EXQ_STATUS_NULL_POINTER = 1,
  EXQ_STATUS_INVALID_UTF8 = 2,
  EXQ_STATUS_CONFIG = 3,
  EXQ_STATUS_INVALID_PARAMETER = 4,
  EXQ_STATUS_NO_INVENTORY = 5,
  EXQ_STATUS_NUMERICAL = 6,
  EXQ_STATUS_BUFFER_TOO_SMALL = 7,
  EXQ_STATUS_PANIC = 8,
} ExqStatus;

// Opaque problem handle.
typedef struct ExqProblem ExqProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses a TOML experiment config and solves its value table.
//
// # Safety
// `toml` must be a valid NUL-terminated string and `out` a valid pointer.
// The handle written to `*out` must be released with [`exq_problem_free`].
enum ExqStatus exq_problem_from_toml(const char *toml, struct ExqProblem **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `problem` must come from [`exq_problem_from_toml`] and not be used afterwards.
void exq_problem_free(struct ExqProblem *problem);

// Initial inventory `Q0` of the problem.
//
// # Safety
// `problem` and `out` must be valid pointers.
enum ExqStatus exq_problem_q0(const struct ExqProblem *problem, uint32_t *out);

// Optimal ask at `(t, q)` before and after projection.
//
// # Safety
// All pointers must be valid.
enum ExqStatus exq_quote(const struct ExqProblem *problem,
                         double t,
                         uint32_t q,
                         double *unconstrained,
                         double *projected);

// Value function at `(t, x, M, q)`.
//
// # Safety
// All pointers must be valid.
enum ExqStatus exq_value(const struct ExqProblem *problem,
                         double t,
                         double x,
                         double m,
                         uint32_t q,
                         double *out);

// Reduced coefficients `A_0..A_{Q0}`, `C`, `G_0..G_{Q0}` of a constant-signal
// problem. `rates` and `terminal` must each hold `len ≥ Q0 + 1` values.
//
// # Safety
// `rates` and `terminal` must point to `len` writable doubles.
enum ExqStatus exq_coefficients(const struct ExqProblem *problem,
                                double *rates,
                                double *terminal,
                                size_t len,
                                double *execution);

// Monte Carlo estimate of the objective under the optimal feedback shifted
// by `offset`, with the config's estimator.
//
// # Safety
// All pointers must be valid.
enum ExqStatus exq_estimate(const struct ExqProblem *problem,
                            double offset,
                            size_t n_paths,
                            uint64_t seed,
                            double *mean,
                            double *std_error);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *exq_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXECQUOTE_H */
