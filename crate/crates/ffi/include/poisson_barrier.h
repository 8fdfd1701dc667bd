#ifndef POISSON_BARRIER_H
#define POISSON_BARRIER_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_ARGUMENT = 2,
  PB_STATUS_INVALID_MODEL = 3,
  PB_STATUS_INVALID_PLAN = 4,
  PB_STATUS_BUDGET_EXCEEDED = 5,
  PB_STATUS_NON_FINITE = 6,
  PB_STATUS_INVALID_COST = 7,
  PB_STATUS_BRACKET_EXPANSION = 8,
  PB_STATUS_IO = 9,
  PB_STATUS_PANIC = 10,
} PbStatus;

typedef enum PbLawKind {
  // `|N(param_a, param_b)|`, with `param_b` the variance.
  PB_LAW_KIND_FOLDED_NORMAL = 0,
  // Shape `param_a`, scale `param_b`.
  PB_LAW_KIND_WEIBULL = 1,
  // Constant `param_a`.
  PB_LAW_KIND_POINT_MASS = 2,
  // Mean `param_a`.
  PB_LAW_KIND_EXPONENTIAL = 3,
} PbLawKind;

typedef enum PbCostCase {
  PB_COST_CASE_F1 = 1,
  PB_COST_CASE_F2 = 2,
  PB_COST_CASE_F3 = 3,
  PB_COST_CASE_LINEAR = 4,
} PbCostCase;

typedef struct PbBundle PbBundle;

typedef struct PbCost PbCost;

typedef struct PbModel PbModel;

typedef struct PbPlan {
  double horizon;
  size_t steps;
  size_t paths;
  double discount;
  double eta;
  uint64_t seed;
} PbPlan;

// One compound Poisson component. `sign` is +1 or -1.
typedef struct PbJump {
  double rate;
  int32_t sign;
  enum PbLawKind law;
  double param_a;
  double param_b;
} PbJump;

// Cost callback: value of the cost (or its right derivative) at `x`.
typedef double (*PbScalarFn)(double x, void *user_data);

typedef struct PbEstimate {
  double mean;
  double std_error;
  size_t n_paths;
} PbEstimate;

typedef struct PbBarrier {
  double b_star;
  double bracket_lo;
  double bracket_hi;
  size_t iterations;
  struct PbEstimate rho_at_lo;
  struct PbEstimate rho_at_hi;
} PbBarrier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// owned by the library and valid until the next `pb_*` call on this thread.
const char *pb_last_error_message(void);

// Static name of a status code.
const char *pb_status_name(enum PbStatus status);

// Reference plan (`T = 100`, `N = 10000`, `M = 5000`, `q = 0.05`, `η = 1`).
struct PbPlan pb_plan_reference(uint64_t seed);

// Reference jump diffusion.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum PbStatus pb_model_reference(struct PbModel **out);

// Drift, volatility and `n_jumps` compound Poisson components.
//
// # Safety
// `jumps` must point to `n_jumps` readable elements (or be NULL when
// `n_jumps` is 0); `out` must be writable.
enum PbStatus pb_model_new(double drift,
                           double sigma,
                           const struct PbJump *jumps,
                           size_t n_jumps,
                           struct PbModel **out);

// # Safety
// `model` must be NULL or a handle from a `pb_model_*` constructor not yet freed.
void pb_model_free(struct PbModel *model);

// Simulates one bundle of paths and observation flags.
//
// # Safety
// `model` must be a live handle, `plan` readable and `out` writable.
enum PbStatus pb_simulate(const struct PbModel *model,
                          const struct PbPlan *plan,
                          struct PbBundle **out);

// # Safety
// `bundle` must be NULL or a handle from [`pb_simulate`] not yet freed.
void pb_bundle_free(struct PbBundle *bundle);

// Path count and grid width (`steps + 1`).
//
// # Safety
// `bundle` must be a live handle; `paths` and `width` writable.
enum PbStatus pb_bundle_shape(const struct PbBundle *bundle, size_t *paths, size_t *width);

// Borrowed view of path `m` (`X_0 = 0, …, X_N`), valid while the bundle lives.
//
// # Safety
// `bundle` must be a live handle; `values` and `len` writable.
enum PbStatus pb_bundle_path(const struct PbBundle *bundle,
                             size_t m,
                             const double **values,
                             size_t *len);

// # Safety
// `out` must be writable.
enum PbStatus pb_cost_builtin(enum PbCostCase cost_case, double unit_cost, struct PbCost **out);

// User cost from callbacks. `f_prime_plus` must return the right derivative
// of `f`. Both callbacks may run concurrently from several threads and must
// not unwind; `user_data` must outlive the handle.
//
// # Safety
// `out` must be writable and the callbacks must satisfy the contract above.
enum PbStatus pb_cost_custom(PbScalarFn f,
                             PbScalarFn f_prime_plus,
                             void *user_data,
                             double unit_cost,
                             struct PbCost **out);

// # Safety
// `cost` must be NULL or a handle from a `pb_cost_*` constructor not yet freed.
void pb_cost_free(struct PbCost *cost);

// `ρ̂(b)`: discounted integral of the cost slope along the process
// controlled at `b` from `b`.
//
// # Safety
// `bundle` and `cost` must be live handles; `out` writable.
enum PbStatus pb_estimate_rho(const struct PbBundle *bundle,
                              const struct PbCost *cost,
                              double b,
                              struct PbEstimate *out);

// `v̂_b(x)`: expected discounted running plus control cost.
//
// # Safety
// `bundle` and `cost` must be live handles; `out` writable.
enum PbStatus pb_estimate_value(const struct PbBundle *bundle,
                                const struct PbCost *cost,
                                double b,
                                double x,
                                struct PbEstimate *out);

// `v̂'_b(x)`.
//
// # Safety
// `bundle` and `cost` must be live handles; `out` writable.
enum PbStatus pb_estimate_value_derivative(const struct PbBundle *bundle,
                                           const struct PbCost *cost,
                                           double b,
                                           double x,
                                           struct PbEstimate *out);

// Optimal barrier `inf{b : ρ̂(b) + C ≥ 0}` by bisection to `tol`.
//
// # Safety
// `bundle` and `cost` must be live handles; `out` writable.
enum PbStatus pb_find_optimal_barrier(const struct PbBundle *bundle,
                                      const struct PbCost *cost,
                                      double tol,
                                      struct PbBarrier *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POISSON_BARRIER_H */
