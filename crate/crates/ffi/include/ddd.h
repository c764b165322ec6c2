#ifndef DDD_H
#define DDD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DddLoss {
  DDD_LOSS_SQUARE = 0,
  DDD_LOSS_L1 = 1,
  DDD_LOSS_HUBER = 2,
  DDD_LOSS_KL = 3,
  DDD_LOSS_L1L2 = 4,
} DddLoss;

typedef enum DddRegularizer {
  DDD_REGULARIZER_SQUARED_NORM = 0,
  DDD_REGULARIZER_HAAR_L1 = 1,
  DDD_REGULARIZER_TV = 2,
} DddRegularizer;

typedef enum DddScheduleKind {
  /*
   `lambda_max`, `lambda_min`, `length`.
   */
  DDD_SCHEDULE_KIND_VANILLA = 0,
  /*
   `lambda0 / (n+1)^beta` with `lambda_max` as `lambda0`.
   */
  DDD_SCHEDULE_KIND_POLYNOMIAL = 1,
  /*
   `lambda_max`, `lambda_min`, `length` grid points, restart tolerance `eps`.
   */
  DDD_SCHEDULE_KIND_WARM = 2,
} DddScheduleKind;

/*
 Result code of every `ddd_*` call.
 */
typedef enum DddStatus {
  DDD_STATUS_OK = 0,
  DDD_STATUS_NULL_POINTER = 1,
  DDD_STATUS_INVALID_ARGUMENT = 2,
  DDD_STATUS_DIMENSION = 3,
  DDD_STATUS_DOMAIN = 4,
  DDD_STATUS_DIVERGENCE = 5,
  DDD_STATUS_IO = 6,
  DDD_STATUS_PANIC = 7,
  DDD_STATUS_SCHEDULE_EXHAUSTED = 8,
} DddStatus;

/*
 Opaque linear operator with its norm bound.
 */
typedef struct DddOperator DddOperator;

/*
 Opaque solver state.
 */
typedef struct DddSolver DddSolver;

/*
 Model and schedule for [`ddd_solver_new`]. Fields not used by the chosen
 variants are ignored. [`ddd_setup_default`] fills a usable baseline.
 */
typedef struct DddSetup {
  enum DddLoss loss;
  /*
   Huber `sigma`, or `a1` for the L1+L2 loss.
   */
  double loss_a;
  /*
   `a2` for the L1+L2 loss.
   */
  double loss_b;
  enum DddRegularizer regularizer;
  double reg_mu;
  double reg_sigma;
  uint32_t haar_levels;
  uint32_t tv_inner_iters;
  double tv_inner_tol;
  enum DddScheduleKind schedule;
  double lambda_max;
  double lambda_min;
  double beta;
  uint64_t length;
  double eps;
} DddSetup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer is
 valid until the next failing call on the same thread.
 */
const char *ddd_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *ddd_version(void);

/*
 Square loss, squared-norm regularizer, polynomial schedule `1/(n+1)`.
 */
struct DddSetup ddd_setup_default(void);

/*
 Dense `rows × cols` matrix from row-major `data` of length `rows*cols`.
 Inputs are vectors of length `cols`, outputs of length `rows`.

 # Safety
 `data` must point to `rows*cols` readable doubles and `out` must be
 writable.
 */
enum DddStatus ddd_operator_matrix_new(size_t rows,
                                       size_t cols,
                                       const double *data,
                                       struct DddOperator **out);

/*
 The 9×9 Gaussian blur with variance 10 and reflecting boundaries on
 `rows × cols` images.

 # Safety
 `out` must be writable.
 */
enum DddStatus ddd_operator_blur_new(size_t rows, size_t cols, struct DddOperator **out);

/*
 # Safety
 `op` must be a live handle or null.
 */
void ddd_operator_free(struct DddOperator *op);

/*
 Input and output lengths of the operator.

 # Safety
 `op` must be a live handle; `input_len` and `output_len` writable.
 */
enum DddStatus ddd_operator_dims(const struct DddOperator *op,
                                 size_t *input_len,
                                 size_t *output_len);

/*
 Upper bound on `‖A‖` used for the step size.

 # Safety
 `op` must be a live handle; `out` writable.
 */
enum DddStatus ddd_operator_norm(const struct DddOperator *op, double *out);

/*
 `y = A x`.

 # Safety
 `op` must be a live handle and the arrays valid for their lengths.
 */
enum DddStatus ddd_operator_apply(const struct DddOperator *op,
                                  const double *x,
                                  size_t x_len,
                                  double *y,
                                  size_t y_len);

/*
 `x = Aᵀ y`.

 # Safety
 `op` must be a live handle and the arrays valid for their lengths.
 */
enum DddStatus ddd_operator_adjoint(const struct DddOperator *op,
                                    const double *y,
                                    size_t y_len,
                                    double *x,
                                    size_t x_len);

/*
 Creates a solver for datum `y` (length = operator output length) with
 `u₀ = 0`. The operator is shared, so `op` may be freed afterwards.

 # Safety
 `op` must be a live handle, `y` valid for `y_len` reads, `setup`
 readable and `out` writable.
 */
enum DddStatus ddd_solver_new(const struct DddOperator *op,
                              const double *y,
                              size_t y_len,
                              const struct DddSetup *setup,
                              struct DddSolver **out);

/*
 # Safety
 `s` must be a live handle or null.
 */
void ddd_solver_free(struct DddSolver *s);

/*
 One step. Writes the parameter used and the dual value after the step
 (`+inf` when infeasible) to the optional outputs.

 # Safety
 `s` must be a live handle; `lambda` and `dual_value` null or writable.
 */
enum DddStatus ddd_solver_step(struct DddSolver *s, double *lambda, double *dual_value);

/*
 Up to `max_iters` steps, stopping early when the schedule ends. The
 number of steps taken is written to `done` if non-null.

 # Safety
 `s` must be a live handle; `done` null or writable.
 */
enum DddStatus ddd_solver_run(struct DddSolver *s, size_t max_iters, size_t *done);

/*
 Copies the primal iterate `x_n` (operator input length).

 # Safety
 `s` must be a live handle and `x` valid for `len` writes.
 */
enum DddStatus ddd_solver_primal(const struct DddSolver *s, double *x, size_t len);

/*
 Copies the dual iterate `u_n` (operator output length).

 # Safety
 `s` must be a live handle and `u` valid for `len` writes.
 */
enum DddStatus ddd_solver_dual(const struct DddSolver *s, double *u, size_t len);

/*
 Parameter of the last step, or the first parameter before any step.

 # Safety
 `s` must be a live handle; `out` writable.
 */
enum DddStatus ddd_solver_lambda(const struct DddSolver *s, double *out);

/*
 Number of completed steps.

 # Safety
 `s` must be a live handle; `out` writable.
 */
enum DddStatus ddd_solver_iteration(const struct DddSolver *s, size_t *out);

/*
 Step size `τ`.

 # Safety
 `s` must be a live handle; `out` writable.
 */
enum DddStatus ddd_solver_tau(const struct DddSolver *s, double *out);

/*
 Dual objective at the current iterate for parameter `lambda`; `+inf`
 when the iterate is infeasible.

 # Safety
 `s` must be a live handle; `out` writable.
 */
enum DddStatus ddd_solver_dual_value(const struct DddSolver *s, double lambda, double *out);

/*
 Continuous stopping time `t` and index `n = ⌈t⌉` for noise level
 `delta`, schedule exponent `beta`, conditioning exponent `theta`,
 constants `a`, `b` and offset `t0`.

 # Safety
 `t` and `n` must be null or writable.
 */
enum DddStatus ddd_theoretical_stop(double delta,
                                    double beta,
                                    double theta,
                                    double a,
                                    double b,
                                    double t0,
                                    double *t,
                                    size_t *n);

/*
 Ground-truth gap `‖x − x_true‖ / len`.

 # Safety
 Both arrays must be valid for `len` reads and `out` writable.
 */
enum DddStatus ddd_gtg(const double *x, const double *x_true, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDD_H */
