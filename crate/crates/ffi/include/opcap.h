#ifndef OPCAP_H
#define OPCAP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Single-loss approximation flavour.
 */
typedef enum {
  OPCAP_SLA_VARIANT_LOGNORMAL_CLOSED_FORM = 0,
  OPCAP_SLA_VARIANT_OPCAR = 1,
  OPCAP_SLA_VARIANT_CORRECTED = 2,
} OpcapSlaVariant;

/**
 * Result code of every fallible call.
 */
typedef enum {
  OPCAP_STATUS_OK = 0,
  OPCAP_STATUS_INVALID_ARGUMENT = 1,
  OPCAP_STATUS_NULL_POINTER = 2,
  OPCAP_STATUS_NUMERIC_FAILURE = 3,
  OPCAP_STATUS_PANIC = 4,
} OpcapStatus;

/**
 * Opaque compound Poisson model.
 */
typedef struct OpcapModel OpcapModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an empty model; free it with [`opcap_model_free`].
 */
OpcapModel *opcap_model_new(void);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`opcap_model_new`] and not be used afterwards.
 */
void opcap_model_free(OpcapModel *model);

/**
 * Number of components in the model (0 for null).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t opcap_model_len(const OpcapModel *model);

/**
 * Adds a Poisson(`rate`)–Lognormal(`mu`, `sigma`) component.
 *
 * # Safety
 * `model` must be a live handle.
 */
OpcapStatus opcap_model_add_lognormal(OpcapModel *model, double rate, double mu, double sigma);

/**
 * Adds a Poisson–Gamma(`shape`, `scale`) component.
 *
 * # Safety
 * `model` must be a live handle.
 */
OpcapStatus opcap_model_add_gamma(OpcapModel *model, double rate, double shape, double scale);

/**
 * Adds a Poisson–Pareto(`shape`, `scale`) component.
 *
 * # Safety
 * `model` must be a live handle.
 */
OpcapStatus opcap_model_add_pareto(OpcapModel *model, double rate, double shape, double scale);

/**
 * Adds a Poisson–LogLogistic(`shape`, `scale`) component.
 *
 * # Safety
 * `model` must be a live handle.
 */
OpcapStatus opcap_model_add_loglogistic(OpcapModel *model, double rate, double shape, double scale);

/**
 * Adds a Poisson–LogGamma(`shape`, `log_rate`) component.
 *
 * # Safety
 * `model` must be a live handle.
 */
OpcapStatus opcap_model_add_loggamma(OpcapModel *model, double rate, double shape, double log_rate);

/**
 * Multiplies every severity by `factor` (e.g. 1e-6 for Euro to Euro million).
 *
 * # Safety
 * `model` must be a live handle.
 */
OpcapStatus opcap_model_rescale(OpcapModel *model, double factor);

/**
 * Expected annual loss.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
OpcapStatus opcap_model_annual_loss_mean(const OpcapModel *model, double *out);

/**
 * Long-term loss component with thresholds `low` and `high`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
OpcapStatus opcap_model_long_term_lc(const OpcapModel *model, double low, double high, double *out);

/**
 * Single-loss approximation of the `alpha` VaR; `variant` is an
 * `OpcapSlaVariant` value.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
OpcapStatus opcap_model_sla_var(const OpcapModel *model,
                                double alpha,
                                int32_t variant,
                                double *out);

/**
 * Monte Carlo `alpha` VaR over `years` simulated years; deterministic in
 * `seed`.
 *
 * # Safety
 * `model` must be a live handle; `out_var` and `out_standard_error` writable.
 */
OpcapStatus opcap_model_mc_var(const OpcapModel *model,
                               double alpha,
                               uint64_t years,
                               uint64_t seed,
                               double *out_var,
                               double *out_standard_error);

/**
 * BI at which long-term SMA capital equals the corrected-SLA VaR. The model
 * must be in Euro million.
 *
 * # Safety
 * `model` must be a live handle and `out_bi` writable.
 */
OpcapStatus opcap_model_implied_bi(const OpcapModel *model, double alpha, double *out_bi);

/**
 * SMA bucket (1–5) of a business indicator.
 */
uint8_t opcap_bucket(double bi);

/**
 * Business indicator component.
 */
double opcap_bic(double bi);

/**
 * SMA capital for a business indicator and loss component (Euro million).
 *
 * # Safety
 * `out` must be writable.
 */
OpcapStatus opcap_sma_capital(double bi, double lc, double *out);

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call into the library on this thread.
 */
const char *opcap_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPCAP_H */
