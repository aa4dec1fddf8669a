/* C interface of the dicap toolkit. Generated by cbindgen; do not edit. */

#ifndef DICAP_H
#define DICAP_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit codes.
 */
typedef enum DicapStatus {
  DICAP_STATUS_OK = 0,
  DICAP_STATUS_NULL_POINTER = 1,
  DICAP_STATUS_INVALID_CONFIG = 2,
  DICAP_STATUS_NUMERIC_FAILURE = 3,
  DICAP_STATUS_DOMAIN_ERROR = 4,
} DicapStatus;

/**
 * Opaque unifilar channel handle.
 */
typedef struct DicapChannel DicapChannel;

/**
 * Opaque Q-graph handle.
 */
typedef struct DicapQGraph DicapQGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for the calling thread. The pointer stays valid
 * until the next failing call on the same thread and must not be freed.
 */
const char *dicap_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dicap_version(void);

/**
 * Build the q-ary Ising channel (`2 <= q <= 8`).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DicapStatus dicap_channel_ising(size_t q, struct DicapChannel **out);

/**
 * Build a binary symmetric channel wrapped as a one-state unifilar FSC.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DicapStatus dicap_channel_bsc(double p, struct DicapChannel **out);

/**
 * Load a channel spec file (TOML).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DicapStatus dicap_channel_load(const char *path, struct DicapChannel **out);

/**
 * Release a channel handle.
 *
 * # Safety
 * `ch` must come from a `dicap_channel_*` constructor, not freed twice.
 */
void dicap_channel_free(struct DicapChannel *ch);

/**
 * The 4-node output-quantization graph of the binary Ising channel.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DicapStatus dicap_qgraph_ising_q1(struct DicapQGraph **out);

/**
 * De Bruijn graph of order `m` over an output alphabet of size `y_size`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DicapStatus dicap_qgraph_debruijn(size_t m, size_t y_size, struct DicapQGraph **out);

/**
 * Load a Q-graph spec file (TOML).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DicapStatus dicap_qgraph_load(const char *path, struct DicapQGraph **out);

/**
 * Release a Q-graph handle.
 *
 * # Safety
 * `g` must come from a `dicap_qgraph_*` constructor, not freed twice.
 */
void dicap_qgraph_free(struct DicapQGraph *g);

/**
 * Root of `a^3 = (1-a)^4` and the binary Ising feedback capacity in bits.
 *
 * # Safety
 * Both output pointers must be valid.
 */
enum DicapStatus dicap_ising_solution(double *out_a, double *out_rho);

/**
 * Closed-form feedback capacity of the q-ary Ising channel.
 *
 * # Safety
 * Both output pointers must be valid.
 */
enum DicapStatus dicap_qary_ising_capacity(size_t x_size, double *out_p, double *out_value);

/**
 * Value iteration on the belief MDP: writes the span bracket
 * `[rho_low, rho_high]` around the feedback capacity, in bits.
 *
 * # Safety
 * `ch` must be a live channel handle; output pointers must be valid.
 */
enum DicapStatus dicap_value_iteration(const struct DicapChannel *ch,
                                       size_t grid,
                                       size_t iters,
                                       double *out_rho_low,
                                       double *out_rho_high);

/**
 * Q-graph sandwich: the convex-program upper bound, the matching lower
 * bound of the extracted policy, and its BCJR-invariance residual.
 *
 * # Safety
 * `ch` and `g` must be live handles; output pointers must be valid.
 */
enum DicapStatus dicap_qbound(const struct DicapChannel *ch,
                              const struct DicapQGraph *g,
                              double *out_upper,
                              double *out_lower,
                              double *out_invariance);

/**
 * Dual bound: golden-section over the scalar Ising test family on
 * `[lo, hi]`, writing the minimizing parameter and the bound in bits.
 *
 * # Safety
 * `ch` and `g` must be live handles; output pointers must be valid.
 */
enum DicapStatus dicap_duality_optimize(const struct DicapChannel *ch,
                                        const struct DicapQGraph *g,
                                        double lo,
                                        double hi,
                                        double *out_a,
                                        double *out_rho);

/**
 * Extended Blahut-Arimoto at blocklength `n` from initial state `s0`:
 * writes the sandwich `[i_l, i_u]` in bits per symbol.
 *
 * # Safety
 * `ch` must be a live handle; output pointers must be valid.
 */
enum DicapStatus dicap_ba_bounds(const struct DicapChannel *ch,
                                 size_t n,
                                 size_t s0,
                                 double eps,
                                 size_t max_iter,
                                 double *out_i_l,
                                 double *out_i_u);

/**
 * CTW estimate of the DI rate from two parallel symbol buffers.
 *
 * # Safety
 * `x` and `y` must point to `len` readable elements; `out` must be valid.
 */
enum DicapStatus dicap_ctw_di(const size_t *x,
                              const size_t *y,
                              size_t len,
                              size_t x_size,
                              size_t y_size,
                              size_t depth,
                              uint8_t variant,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DICAP_H */
