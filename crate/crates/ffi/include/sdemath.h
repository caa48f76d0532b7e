#ifndef SDEMATH_H
#define SDEMATH_H

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum SdeStatus {
  SDE_STATUS_OK = 0,
  SDE_STATUS_NULL_POINTER = 1,
  SDE_STATUS_INVALID_ARGUMENT = 2,
  SDE_STATUS_PARSE = 3,
  SDE_STATUS_NUMERIC = 4,
  SDE_STATUS_IO = 5,
  SDE_STATUS_BUFFER_TOO_SMALL = 6,
  SDE_STATUS_PANIC = 7,
} SdeStatus;

typedef enum SdeCalculus {
  SDE_CALCULUS_ITO = 0,
  SDE_CALCULUS_STRATONOVICH = 1,
} SdeCalculus;

// Linear model `dx = (Ax + Bu)dt + F dw`, `y = Hx`.
typedef struct SdeLinearHandle SdeLinearHandle;

// Nonlinear model `dx = a(x,t)dt + B(x,t)dw`.
typedef struct SdeModelHandle SdeModelHandle;

// A compiled scheme with its truncation numbers, ready to run paths.
typedef struct SdeSimulatorHandle SdeSimulatorHandle;

// Cache of exact coefficients, optionally backed by a file.
typedef struct SdeStoreHandle SdeStoreHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length.
size_t sde_last_error(char *buf, size_t len);

// Parses a model. `drift` holds `n` formulas, `diffusion` holds `n*m`
// formulas row-major, `x0` holds `n` values.
enum SdeStatus sde_model_new(size_t n,
                             size_t m,
                             const char *const *drift,
                             const char *const *diffusion,
                             const double *x0,
                             struct SdeModelHandle **out);

void sde_model_free(struct SdeModelHandle *model);

// Opens a coefficient cache file, or an in-memory cache when `path` is null.
enum SdeStatus sde_store_open(const char *path, struct SdeStoreHandle **out);

// Writes pending coefficients of a file-backed cache.
enum SdeStatus sde_store_flush(const struct SdeStoreHandle *store);

void sde_store_free(struct SdeStoreHandle *store);

// Exact normalized Fourier–Legendre coefficient as a double.
enum SdeStatus sde_coefficient(const struct SdeStoreHandle *store,
                               const uint8_t *weights,
                               const uint16_t *indices,
                               size_t k,
                               double *out);

// Selects truncation numbers and compiles the scheme.
enum SdeStatus sde_simulator_new(const struct SdeModelHandle *model,
                                 const struct SdeStoreHandle *store,
                                 uint32_t order_code,
                                 enum SdeCalculus calculus,
                                 double dt,
                                 double horizon,
                                 double c,
                                 uint64_t seed,
                                 struct SdeSimulatorHandle **out);

// Number of steps `T/Δ`.
size_t sde_simulator_steps(const struct SdeSimulatorHandle *sim);

// Runs one path into `states`, `(steps + 1) * n` values laid out by time.
enum SdeStatus sde_simulator_path(const struct SdeSimulatorHandle *sim,
                                  uint64_t path,
                                  double *states,
                                  size_t len);

// Runs `paths` paths and writes per-time mean and unbiased variance, each
// `(steps + 1) * n` values. Diverged paths are excluded and counted.
enum SdeStatus sde_simulator_ensemble(struct SdeSimulatorHandle *sim,
                                      size_t paths,
                                      double *mean,
                                      double *var,
                                      size_t len,
                                      size_t *diverged);

void sde_simulator_free(struct SdeSimulatorHandle *sim);

// Builds a linear model. `a` is `n*n`, `b` is `n*k`, `f` is `n*m`, `h` is
// `r*n` (null when `r == 0`), `u` holds `k` formulas in `t`.
enum SdeStatus sde_linear_new(size_t n,
                              size_t m,
                              size_t k,
                              size_t r,
                              const double *a,
                              const double *b,
                              const double *f,
                              const double *h,
                              const char *const *u,
                              const double *x0,
                              struct SdeLinearHandle **out);

// Simulates `paths` paths and writes state mean and variance,
// `(steps + 1) * n` values each.
enum SdeStatus sde_linear_simulate(const struct SdeLinearHandle *model,
                                   double dt,
                                   double horizon,
                                   size_t paths,
                                   uint64_t seed,
                                   double *mean,
                                   double *var,
                                   size_t len);

void sde_linear_free(struct SdeLinearHandle *model);

// `out = e^{AΔ}` for an `n×n` row-major `a`.
enum SdeStatus sde_mat_exp(size_t n, const double *a, double dt, double *out);

// One-step noise covariance `D(Δ)` of `dx = Ax dt + F dw`, row-major `n×n`.
enum SdeStatus sde_step_covariance(size_t n,
                                   size_t m,
                                   const double *a,
                                   const double *f,
                                   double dt,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDEMATH_H */
