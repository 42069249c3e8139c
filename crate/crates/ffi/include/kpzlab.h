#ifndef KPZLAB_H
#define KPZLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KpzDisorder {
  KPZ_DISORDER_RADEMACHER = 0,
  // Uniform on `[−a, a]`.
  KPZ_DISORDER_UNIFORM = 1,
  // `2ε^{-1/2}(B − ½)` with `B ~ Beta(1/ε, 1/ε)`.
  KPZ_DISORDER_BETA = 2,
} KpzDisorder;

typedef enum KpzStatus {
  KPZ_STATUS_OK = 0,
  KPZ_STATUS_NULL_POINTER = 1,
  KPZ_STATUS_INVALID_PARAMETER = 2,
  // A contour or time step the caller chose is unusable.
  KPZ_STATUS_BAD_DISCRETISATION = 3,
  // The computation ran but produced an unusable result.
  KPZ_STATUS_NUMERICAL = 4,
  KPZ_STATUS_PANIC = 5,
} KpzStatus;

// Opaque sampled environment.
typedef struct KpzEnvironment KpzEnvironment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message, NUL-terminated and truncated to fit, into
// `buf`. Returns the full message length in bytes, excluding the NUL.
//
// # Safety
// `buf` must be null or valid for `len` bytes of writes.
uintptr_t kpz_last_error_message(char *buf, uintptr_t len);

// Creates an environment declared on time indices below `n_max`. `a` is
// read only for [`KpzDisorder::Uniform`]. Free with
// [`kpz_environment_free`].
//
// # Safety
// Out-pointers must be null or valid for a write.
enum KpzStatus kpz_environment_new(enum KpzDisorder kind,
                                   double a,
                                   double epsilon,
                                   uint64_t seed,
                                   uint64_t n_max,
                                   struct KpzEnvironment **out);

// # Safety
// `env` must be null or a live handle from [`kpz_environment_new`]; it is invalid afterwards.
void kpz_environment_free(struct KpzEnvironment *env);

// # Safety
// `env` must be null or a live handle; `out` must be null or valid for a write.
enum KpzStatus kpz_environment_omega(const struct KpzEnvironment *env,
                                     uint64_t i,
                                     int64_t j,
                                     double *out);

// `ln P^ω(S_n = y)`.
//
// # Safety
// `env` must be null or a live handle; `out` must be null or valid for a write.
enum KpzStatus kpz_rwre_log_prob(const struct KpzEnvironment *env,
                                 uint64_t n,
                                 int64_t y,
                                 double *out);

// Rescaled walk probability at the lattice point snapped from `(t, x)`.
//
// # Safety
// `env` must be null or a live handle; `out` must be null or valid for a write.
enum KpzStatus kpz_rescaled_rwre(const struct KpzEnvironment *env,
                                 double v,
                                 double t,
                                 double x,
                                 double *out);

// `ln P⁰(S_n = m)`; `-inf` off the support.
double kpz_ssrw_log_prob(uint64_t n, int64_t m);

// Rate function `I(v)` and its slope `I'(v)`.
//
// # Safety
// Out-pointers must be null or valid for a write.
enum KpzStatus kpz_rate(double v, double *rate, double *slope);

// # Safety
// Out-pointers must be null or valid for a write.
enum KpzStatus kpz_ldp_limit(double v, double t, double x, int32_t m1, int32_t m2, double *out);

// `2 p_{1−v²}(t, x)`.
//
// # Safety
// Out-pointers must be null or valid for a write.
enum KpzStatus kpz_heat_solution(double v, double t, double x, double *out);

// `E[Z(T, n_1) ⋯ Z(T, n_k)]` for the Beta(α, β) polymer by contour
// integration, `k ∈ {1, 2}`, sites non-increasing.
//
// # Safety
// The input array must be null or hold `k` readable elements; `out` must be null or valid for a write.
enum KpzStatus kpz_beta_moment(uint64_t steps,
                               const int64_t *sites,
                               uintptr_t k,
                               double alpha,
                               double beta,
                               uintptr_t n_points,
                               double *out);

// `E[u(t, x_1) ⋯ u(t, x_k)]` for the limiting SHE, `k ∈ {1, 2}`.
//
// # Safety
// The input array must be null or hold `k` readable elements; `out` must be null or valid for a write.
enum KpzStatus kpz_she_moment(double t,
                              const double *xs,
                              uintptr_t k,
                              double gamma,
                              uintptr_t n_points,
                              double *out);

// Saddle point of the moment exponent: the asymptotic `z₀` and the root
// found numerically.
//
// # Safety
// Out-pointers must be null or valid for a write.
enum KpzStatus kpz_critical_point(double gamma,
                                  double epsilon,
                                  double t,
                                  double x,
                                  double *z0_asymptotic,
                                  double *z0_numeric);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KPZLAB_H */
