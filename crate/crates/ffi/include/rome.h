#ifndef ROME_H
#define ROME_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RomeStatus {
  ROME_STATUS_OK = 0,
  ROME_STATUS_NULL_POINTER = 1,
  ROME_STATUS_INVALID_UTF8 = 2,
  ROME_STATUS_INVALID_ARGUMENT = 3,
  ROME_STATUS_PARSE = 4,
  ROME_STATUS_IO = 5,
  ROME_STATUS_INFEASIBLE = 6,
  ROME_STATUS_CHECKPOINT = 7,
  ROME_STATUS_NUMERIC = 8,
  ROME_STATUS_BUFFER_TOO_SMALL = 9,
  ROME_STATUS_PANIC = 10,
  ROME_STATUS_OTHER = 11,
} RomeStatus;

// Outcome of a solve.
typedef enum RomeSolveStatus {
  ROME_SOLVE_STATUS_OPTIMAL = 0,
  ROME_SOLVE_STATUS_FEASIBLE = 1,
  ROME_SOLVE_STATUS_INFEASIBLE = 2,
  ROME_SOLVE_STATUS_LIMIT_REACHED = 3,
} RomeSolveStatus;

// Opaque MILP instance.
typedef struct RomeInstance RomeInstance;

// Opaque trained model.
typedef struct RomeModel RomeModel;

// Opaque weighted solution pool.
typedef struct RomePool RomePool;

// Summary of a solve. `objective` is in the instance's own sense and is
// NaN when `has_solution` is 0.
typedef struct RomeSolveResult {
  enum RomeSolveStatus status;
  uint8_t has_solution;
  double objective;
  size_t nodes;
  size_t fallbacks;
} RomeSolveResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`) and returns the full message length without the NUL.
// Pass a null `buf` to query the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t rome_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *rome_version(void);

// Generates a seeded instance. `family` accepts full or short names
// (`independent_set` or `is`); `vars` of 0 selects the family defaults.
//
// # Safety
// `family` must be a NUL-terminated string and `out_instance` a valid pointer.
enum RomeStatus rome_instance_generate(const char *family,
                                       size_t vars,
                                       uint64_t seed,
                                       struct RomeInstance **out_instance);

// # Safety
// `path` must be a NUL-terminated string and `out_instance` a valid pointer.
enum RomeStatus rome_instance_read(const char *path, struct RomeInstance **out_instance);

// # Safety
// `instance` must come from this library; `path` must be NUL-terminated.
enum RomeStatus rome_instance_write(const struct RomeInstance *instance, const char *path);

// Total variable count `n` and binary count `p` (binaries occupy `0..p`).
//
// # Safety
// `instance` must come from this library; the outputs must be valid pointers.
enum RomeStatus rome_instance_dims(const struct RomeInstance *instance,
                                   size_t *out_n,
                                   size_t *out_p);

// # Safety
// `instance` must be null or come from this library and not be used again.
void rome_instance_free(struct RomeInstance *instance);

// Plain branch-and-bound. `node_cap` of 0 means no cap. When `x` is not
// null and a solution exists, it receives the `n` variable values.
//
// # Safety
// `instance` must come from this library; `x` must be null or hold `x_len`
// doubles; `out_result` must be valid.
enum RomeStatus rome_solve(const struct RomeInstance *instance,
                           size_t node_cap,
                           double *x,
                           size_t x_len,
                           struct RomeSolveResult *out_result);

// Collects up to `size` best distinct solutions with objective-based weights.
//
// # Safety
// `instance` must come from this library; `out_pool` must be valid.
enum RomeStatus rome_pool_collect(const struct RomeInstance *instance,
                                  size_t size,
                                  size_t node_cap,
                                  struct RomePool **out_pool);

// Number of solutions in the pool.
//
// # Safety
// `pool` must come from this library; `out_len` must be valid.
enum RomeStatus rome_pool_len(const struct RomePool *pool, size_t *out_len);

// Copies the pool weights (summing to 1) into `weights`.
//
// # Safety
// `pool` must come from this library; `weights` must hold `len` doubles.
enum RomeStatus rome_pool_weights(const struct RomePool *pool, double *weights, size_t len);

// Copies the binary part of solution `index` (as 0.0/1.0) into `x`.
//
// # Safety
// `pool` must come from this library; `x` must hold `len` doubles.
enum RomeStatus rome_pool_solution(const struct RomePool *pool,
                                   size_t index,
                                   double *x,
                                   size_t len);

// # Safety
// `pool` must be null or come from this library and not be used again.
void rome_pool_free(struct RomePool *pool);

// Loads a checkpoint written by `rome train`.
//
// # Safety
// `path` must be NUL-terminated; `out_model` must be valid.
enum RomeStatus rome_model_load(const char *path, struct RomeModel **out_model);

// Writes the `p` predicted marginals of `instance` into `marginals`.
//
// # Safety
// Handles must come from this library; `marginals` must hold `len` doubles.
enum RomeStatus rome_model_predict(const struct RomeModel *model,
                                   const struct RomeInstance *instance,
                                   double *marginals,
                                   size_t len);

// Predict-and-search with `(k0, k1, delta)` given as fractions of `p`.
//
// # Safety
// Handles must come from this library; `x` must be null or hold `x_len`
// doubles; `out_result` must be valid.
enum RomeStatus rome_predict_and_search(const struct RomeModel *model,
                                        const struct RomeInstance *instance,
                                        double k0,
                                        double k1,
                                        double delta,
                                        size_t node_cap,
                                        double *x,
                                        size_t x_len,
                                        struct RomeSolveResult *out_result);

// # Safety
// `model` must be null or come from this library and not be used again.
void rome_model_free(struct RomeModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROME_H */
