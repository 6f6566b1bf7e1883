#ifndef QCASCADE_H
#define QCASCADE_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum QcStatus {
  QC_STATUS_OK = 0,
  QC_STATUS_NULL_POINTER = 1,
  QC_STATUS_INVALID_ARGUMENT = 2,
  QC_STATUS_PARSE = 3,
  QC_STATUS_SCHEMA = 4,
  QC_STATUS_DIMENSION_MISMATCH = 5,
  QC_STATUS_SINGULAR_THETA = 6,
  QC_STATUS_NOT_HURWITZ = 7,
  QC_STATUS_NOT_SYMPLECTIC = 8,
  QC_STATUS_NOT_ONE_MODE = 9,
  QC_STATUS_NUMERICAL_FAILURE = 10,
  QC_STATUS_BUFFER_TOO_SMALL = 11,
  QC_STATUS_PANIC = 12,
} QcStatus;

// Opaque cascade handle.
typedef struct QcCascade QcCascade;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a cascade of `count` oscillators with state dimensions `dims` and
// `channels` field channels.
//
// `r` holds the `dims[k]×dims[k]` energy matrices back to back, `m` the
// `channels×dims[k]` coupling matrices, `theta` the commutation matrices or NULL
// for the canonical `½J`.
//
// # Safety
// `dims` must point to `count` values; `r`, `m` and a non-null `theta` must
// point to the number of doubles implied by `dims` and `channels`; `out` must be
// writable. Release the handle with [`qc_cascade_free`].
enum QcStatus qc_cascade_new(uintptr_t count,
                             const uintptr_t *dims,
                             uintptr_t channels,
                             const double *r,
                             const double *m,
                             const double *theta,
                             struct QcCascade **out);

// Builds a cascade from a JSON description in the command-line input format.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum QcStatus qc_cascade_from_json(const char *json, struct QcCascade **out);

// Releases a handle. NULL is ignored.
//
// # Safety
// `h` must come from this library and not have been freed already.
void qc_cascade_free(struct QcCascade *h);

// Number of oscillators, or 0 for NULL.
//
// # Safety
// `h` must be NULL or a live handle.
uintptr_t qc_cascade_len(const struct QcCascade *h);

// Total state dimension, or 0 for NULL.
//
// # Safety
// `h` must be NULL or a live handle.
uintptr_t qc_cascade_state_dim(const struct QcCascade *h);

// Writes the invariant covariance (`state_dim²` doubles, row-major).
//
// # Safety
// `h` must be a live handle and `out` point to `len` writable doubles.
enum QcStatus qc_cascade_covariance(const struct QcCascade *h, double *out, uintptr_t len);

// Purity `sqrt(det Θ / det 𝒫)` and `ln det 𝒫`. Either output may be NULL.
//
// # Safety
// `h` must be a live handle; non-null outputs must be writable.
enum QcStatus qc_cascade_purity(const struct QcCascade *h, double *purity, double *logdet);

// Gradients of `ln det 𝒫`: `rho` receives the `n_k×n_k` blocks back to back,
// `mu` the `channels×n_k` blocks, both row-major.
//
// # Safety
// `h` must be a live handle; `rho` and `mu` must point to `rho_len` and
// `mu_len` writable doubles.
enum QcStatus qc_cascade_gradients(const struct QcCascade *h,
                                   double *rho,
                                   uintptr_t rho_len,
                                   double *mu,
                                   uintptr_t mu_len);

// Balances every one-mode oscillator under bounds `(a_k, b_k)` given as
// `bounds[2k], bounds[2k+1]`. Writes the 2×2 transforms to `s` (4 per
// oscillator, row-major) and Ψ before and after to `psi_before`, `psi_after`.
//
// # Safety
// `h` must be a live handle; `bounds` must hold `2·len` doubles, `s` `4·len`,
// `psi_before` and `psi_after` `len` each.
enum QcStatus qc_cascade_balance(const struct QcCascade *h,
                                 const double *bounds,
                                 double *s,
                                 double *psi_before,
                                 double *psi_after);

// Copies the last error message on this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length excluding the NUL, or 0
// when there is none.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
uintptr_t qc_last_error_message(char *buf, uintptr_t len);

// Static description of a status code.
const char *qc_status_string(enum QcStatus s);

// Library version as a static string.
const char *qc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCASCADE_H */
