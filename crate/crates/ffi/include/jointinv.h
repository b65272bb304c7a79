#ifndef JOINTINV_H
#define JOINTINV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum JliStatus {
  JliStatus_Ok = 0,
  JliStatus_NullPointer = 1,
  JliStatus_InvalidArgument = 2,
  JliStatus_ShapeMismatch = 3,
  JliStatus_Degenerate = 4,
  JliStatus_Format = 5,
  JliStatus_Io = 6,
  JliStatus_Config = 7,
  JliStatus_ArchitectureMismatch = 8,
  JliStatus_Panic = 9,
} JliStatus;

/**
 * Depth × trace section.
 */
typedef struct JliGrid JliGrid;

/**
 * Trained network with its scalers.
 */
typedef struct JliModel JliModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty after success).
 * The pointer stays valid until the next call into this library.
 */
const char *jli_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *jli_version(void);

/**
 * Creates a grid from `depth * n_traces` trace-major values.
 *
 * # Safety
 * `values` must point to `depth * n_traces` readable doubles and `out` must
 * be writable.
 */
enum JliStatus jli_grid_new(uint32_t depth,
                            uint32_t n_traces,
                            double dz,
                            const double *values,
                            struct JliGrid **out);

/**
 * Reads an SGRD1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum JliStatus jli_grid_read(const char *path, struct JliGrid **out);

/**
 * Writes a grid as SGRD1.
 *
 * # Safety
 * `grid` must come from this library; `path` must be NUL-terminated.
 */
enum JliStatus jli_grid_write(const struct JliGrid *grid, const char *path);

/**
 * Dimensions of a grid; any output pointer may be null.
 *
 * # Safety
 * `grid` must come from this library; non-null outputs must be writable.
 */
enum JliStatus jli_grid_dims(const struct JliGrid *grid,
                             uint32_t *depth,
                             uint32_t *n_traces,
                             double *dz);

/**
 * Copies the trace-major values into `out`, which must hold exactly
 * `depth * n_traces` doubles.
 *
 * # Safety
 * `grid` must come from this library; `out` must point to `len` writable doubles.
 */
enum JliStatus jli_grid_values(const struct JliGrid *grid, double *out, uintptr_t len);

/**
 * Releases a grid; null is ignored.
 *
 * # Safety
 * `grid` must come from this library and not be used afterwards.
 */
void jli_grid_free(struct JliGrid *grid);

/**
 * Loads a JLCK1 checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum JliStatus jli_model_load(const char *path, struct JliModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void jli_model_free(struct JliModel *model);

/**
 * Predicts a property section from a seismic section.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
enum JliStatus jli_model_predict_section(const struct JliModel *model,
                                         const struct JliGrid *seismic,
                                         struct JliGrid **out);

/**
 * Coefficient of determination of `y_hat` against `y`.
 *
 * # Safety
 * `y` and `y_hat` must point to `len` readable doubles; `out` must be writable.
 */
enum JliStatus jli_r2(const double *y, const double *y_hat, uintptr_t len, double *out);

/**
 * Ricker wavelet of `2 * half_len + 1` samples written to `out`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum JliStatus jli_ricker(double freq, double dt, uintptr_t half_len, double *out, uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINTINV_H */
