#ifndef QUASITIP_H
#define QUASITIP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum QtStatus {
  QT_STATUS_OK = 0,
  QT_STATUS_NULL_POINTER = 1,
  QT_STATUS_INDEX = 2,
  QT_STATUS_CONFIG = 3,
  QT_STATUS_PRECONDITION = 4,
  QT_STATUS_DOMAIN = 5,
  QT_STATUS_CONVERGENCE = 6,
  QT_STATUS_ACCURACY = 7,
  QT_STATUS_NUMERICAL = 8,
  QT_STATUS_IO = 9,
  QT_STATUS_BUFFER_TOO_SMALL = 10,
  QT_STATUS_PANIC = 11,
} QtStatus;

// Eigenvalues with per-state PDFs and participation numbers.
typedef struct QtEigenSet QtEigenSet;

// Model parameters.
typedef struct QtModel QtModel;

// A two-particle spreading run.
typedef struct QtTrace QtTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len` bytes) and returns the full message length without the
// terminator; 0 if there is no error. `buf` may be NULL to query the length.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
size_t qt_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *qt_version(void);

// Creates model parameters; `periodic != 0` selects periodic boundaries.
//
// # Safety
// `out` must be a valid location for a handle pointer.
enum QtStatus qt_model_new(size_t n,
                           double lambda,
                           double u,
                           double beta,
                           double alpha,
                           int32_t periodic,
                           struct QtModel **out);

// # Safety
// `model` must be NULL or a handle from [`qt_model_new`] not yet freed.
void qt_model_free(struct QtModel *model);

// Onsite energy of `site`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum QtStatus qt_model_potential_at(const struct QtModel *model, size_t site, double *out);

// All single-particle eigenstates.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum QtStatus qt_sp_eigenset(const struct QtModel *model, struct QtEigenSet **out);

// Two-particle eigenstates: the whole spectrum when `full != 0`, otherwise
// every state with energy in `[lower, upper)`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum QtStatus qt_tp_eigenset(const struct QtModel *model,
                             int32_t full,
                             double lower,
                             double upper,
                             struct QtEigenSet **out);

// # Safety
// `set` must be NULL or a live eigenset handle.
void qt_eigenset_free(struct QtEigenSet *set);

// Number of states; 0 for a NULL handle.
//
// # Safety
// `set` must be NULL or a live eigenset handle.
size_t qt_eigenset_len(const struct QtEigenSet *set);

// Number of lattice sites per PDF; 0 for a NULL handle.
//
// # Safety
// `set` must be NULL or a live eigenset handle.
size_t qt_eigenset_lattice_size(const struct QtEigenSet *set);

// Copies the ascending eigenvalues into `buf` (at least `len` = states).
//
// # Safety
// `set` must be a live handle and `buf` must hold `len` doubles.
enum QtStatus qt_eigenset_energies(const struct QtEigenSet *set, double *buf, size_t len);

// Copies the participation numbers into `buf`.
//
// # Safety
// `set` must be a live handle and `buf` must hold `len` doubles.
enum QtStatus qt_eigenset_participation(const struct QtEigenSet *set, double *buf, size_t len);

// Copies the site PDF of state `q` into `buf`.
//
// # Safety
// `set` must be a live handle and `buf` must hold `len` doubles.
enum QtStatus qt_eigenset_pdf(const struct QtEigenSet *set, size_t q, double *buf, size_t len);

// Evolves an adjacent pair on sites `l0, l0+1` to `t_final`, sampling
// `samples + 1` uniformly spaced times.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum QtStatus qt_transport_run(const struct QtModel *model,
                               size_t l0,
                               double t_final,
                               size_t samples,
                               struct QtTrace **out);

// # Safety
// `trace` must be NULL or a live trace handle.
void qt_trace_free(struct QtTrace *trace);

// Number of recorded samples; 0 for a NULL handle.
//
// # Safety
// `trace` must be NULL or a live trace handle.
size_t qt_trace_len(const struct QtTrace *trace);

// Copies the sample times into `buf`.
//
// # Safety
// `trace` must be a live handle and `buf` must hold `len` doubles.
enum QtStatus qt_trace_times(const struct QtTrace *trace, double *buf, size_t len);

// Copies the second moment σ at each sample into `buf`.
//
// # Safety
// `trace` must be a live handle and `buf` must hold `len` doubles.
enum QtStatus qt_trace_sigmas(const struct QtTrace *trace, double *buf, size_t len);

// Copies the norm at each sample into `buf`.
//
// # Safety
// `trace` must be a live handle and `buf` must hold `len` doubles.
enum QtStatus qt_trace_norms(const struct QtTrace *trace, double *buf, size_t len);

// Spreading exponent γ of `σ ~ t^γ`. `*has_fit` is set to 0 when too few
// samples precede boundary contact for a fit.
//
// # Safety
// `trace` must be a live handle; `gamma` and `has_fit` writable.
enum QtStatus qt_trace_gamma(const struct QtTrace *trace, double *gamma, int32_t *has_fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUASITIP_H */
