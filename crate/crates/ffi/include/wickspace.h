#ifndef WICKSPACE_H
#define WICKSPACE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ws_status {
  WS_STATUS_OK = 0,
  WS_STATUS_NULL_POINTER = 1,
  WS_STATUS_PARSE = 2,
  WS_STATUS_DOMAIN = 3,
  WS_STATUS_DIVERGENT = 4,
  WS_STATUS_BUFFER_TOO_SMALL = 5,
  WS_STATUS_ACCURACY = 6,
  WS_STATUS_REFUSED = 7,
  WS_STATUS_PANIC = 8,
} ws_status;

// Wick series coefficients d_k.
typedef struct ws_coefficients ws_coefficients;

// Log-indicator function ln b(s).
typedef struct ws_indicator ws_indicator;

// Free-field model (massive or two-dimensional massless).
typedef struct ws_model ws_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ws_version(void);

// Message for the last failure on this thread; empty if none. Valid until the
// next failing call on the same thread.
const char *ws_last_error(void);

// Parses "massive:m=<v>,dim=<n>,eps=<v>" or "massless2d:kappa=<v>".
//
// # Safety
// `key` must be a NUL-terminated string and `out` a valid pointer.
enum ws_status ws_model_new(const char *key, struct ws_model **out);

// # Safety
// `model` must come from [`ws_model_new`] and not be used afterwards. Null is ignored.
void ws_model_free(struct ws_model *model);

// Spacetime dimension of the model.
//
// # Safety
// `model` must be a live handle and `out` valid.
enum ws_status ws_model_dim(const struct ws_model *model, size_t *out);

// Two-point function w(z) at z = re + i·im (both of length `dim`), Im z in the
// backward cone.
//
// # Safety
// `re` and `im` must point to `dim` doubles; outputs must be valid.
enum ws_status ws_eval_w(const struct ws_model *model,
                         const double *re,
                         const double *im,
                         size_t dim,
                         double *out_re,
                         double *out_im);

// Parses "factpow:<ρ>", "normexp:<g>" or "table:<path>".
//
// # Safety
// `key` must be a NUL-terminated string and `out` a valid pointer.
enum ws_status ws_coefficients_new(const char *key, struct ws_coefficients **out);

// Builds coefficients from `n` values d_0..d_{n−1}; d_0 must be 1 and the rest
// nonnegative.
//
// # Safety
// `values` must point to `n` doubles and `out` be valid.
enum ws_status ws_coefficients_from_values(const double *values,
                                           size_t n,
                                           struct ws_coefficients **out);

// # Safety
// `coeffs` must come from a `ws_coefficients_*` constructor. Null is ignored.
void ws_coefficients_free(struct ws_coefficients *coeffs);

// ln d_k; −∞ where d_k = 0.
//
// # Safety
// `coeffs` must be a live handle and `out` valid.
enum ws_status ws_coefficients_log_d(const struct ws_coefficients *coeffs, uint64_t k, double *out);

// ln Σ_k L^k k! d_{2k} w^k with `log_w` = ln w.
//
// # Safety
// `coeffs` must be a live handle and `out` valid.
enum ws_status ws_majorant_series(const struct ws_coefficients *coeffs,
                                  double l,
                                  double log_w,
                                  double *out);

// ln Σ_{0 ≤ k < s} k! d_{2k} (s/k)^{k(dim−2)}.
//
// # Safety
// `coeffs` must be a live handle and `out` valid.
enum ws_status ws_truncated_series(const struct ws_coefficients *coeffs,
                                   double s,
                                   uint32_t dim,
                                   double *out);

// ln inf_t e^{st} e^{−k m′ t} t^{−k(dim−2)} in closed form; −∞ when k·m′ ≥ s.
//
// # Safety
// `out` must be valid.
enum ws_status ws_single_term_infimum(double s,
                                      uint64_t k,
                                      uint32_t dim,
                                      double m_prime,
                                      double *out);

// Parses an indicator key such as "poly:3", "exp", "gevrey:0.5", "logpow:2".
//
// # Safety
// `key` must be a NUL-terminated string and `out` a valid pointer.
enum ws_status ws_indicator_new(const char *key, struct ws_indicator **out);

// # Safety
// `ind` must come from [`ws_indicator_new`]. Null is ignored.
void ws_indicator_free(struct ws_indicator *ind);

// ln b(s).
//
// # Safety
// `ind` must be a live handle and `out` valid.
enum ws_status ws_indicator_log_value(const struct ws_indicator *ind, double s, double *out);

// Space descriptor for d_k = (k!)^{−1/ρ} on the two-dimensional massless field,
// from the closed-form table.
//
// # Safety
// `buf` must hold `len` bytes; `needed` may be null.
enum ws_status ws_massless_space(double rho, char *buf, size_t len, size_t *needed);

// Classifies `coeffs` on `model` and writes the space descriptor.
// `WS_STATUS_REFUSED` means a precondition failed or no catalogue space passed.
//
// # Safety
// Handles must be live; `buf` must hold `len` bytes; `needed` may be null.
enum ws_status ws_classify(const struct ws_model *model,
                           const struct ws_coefficients *coeffs,
                           char *buf,
                           size_t len,
                           size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WICKSPACE_H */
