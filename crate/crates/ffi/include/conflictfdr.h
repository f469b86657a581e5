#ifndef CONFLICTFDR_H
#define CONFLICTFDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfdrStatus {
  CFDR_STATUS_OK = 0,
  CFDR_STATUS_NULL_POINTER = 1,
  CFDR_STATUS_INVALID_ARGUMENT = 2,
  CFDR_STATUS_SEQUENCING = 3,
  CFDR_STATUS_OUT_OF_RANGE = 4,
  CFDR_STATUS_P_VALUE_RANGE = 5,
  CFDR_STATUS_INTERNAL = 99,
} CfdrStatus;

typedef enum CfdrAlgorithm {
  CFDR_ALGORITHM_LORD_PP = 0,
  CFDR_ALGORITHM_LOND = 1,
  CFDR_ALGORITHM_SAFFRON_CONST_LAMBDA = 2,
  CFDR_ALGORITHM_ALPHA_INVESTING = 3,
  CFDR_ALGORITHM_RESHAPED_LOND = 4,
  CFDR_ALGORITHM_ALPHA_SPENDING = 5,
  CFDR_ALGORITHM_UNCORRECTED = 6,
  CFDR_ALGORITHM_NAIVE_COMPLETED_ONLY = 7,
  CFDR_ALGORITHM_LORD_DISCOUNTED = 8,
} CfdrAlgorithm;

typedef enum CfdrGammaKind {
  CFDR_GAMMA_KIND_LOG_DECAY = 0,
  CFDR_GAMMA_KIND_POWER_DECAY = 1,
} CfdrGammaKind;

/**
 * Opaque engine.
 */
typedef struct CfdrEngine CfdrEngine;

/**
 * Opaque conflict topology.
 */
typedef struct CfdrTopology CfdrTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *cfdr_last_error(void);

/**
 * Synchronous topology with no conflicts and no length limit.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CfdrStatus cfdr_topology_none(struct CfdrTopology **out);

/**
 * Asynchronous topology from decision indices `E_1..E_len` (1-based);
 * `0` marks a test that never finishes.
 *
 * # Safety
 * `finish_times` must point to `len` values; `out` must be valid.
 */
enum CfdrStatus cfdr_topology_async(const uint64_t *finish_times,
                                    size_t len,
                                    struct CfdrTopology **out);

/**
 * Lagged topology from lags `L_1..L_len`.
 *
 * # Safety
 * `lags` must point to `len` values; `out` must be valid.
 */
enum CfdrStatus cfdr_topology_lagged(const uint64_t *lags, size_t len, struct CfdrTopology **out);

/**
 * Mini-batch topology from consecutive batch sizes.
 *
 * # Safety
 * `sizes` must point to `n_batches` values; `out` must be valid.
 */
enum CfdrStatus cfdr_topology_minibatch(const uint64_t *sizes,
                                        size_t n_batches,
                                        struct CfdrTopology **out);

/**
 * # Safety
 * `topology` must come from a `cfdr_topology_*` constructor and not be
 * freed twice. Null is ignored.
 */
void cfdr_topology_free(struct CfdrTopology *topology);

/**
 * Create an engine. `horizon = 0` selects the default γ horizon. The
 * engine keeps its own reference to the topology.
 *
 * # Safety
 * `topology` and `out` must be valid pointers.
 */
enum CfdrStatus cfdr_engine_new(enum CfdrAlgorithm algorithm,
                                double alpha,
                                double w0,
                                double lambda,
                                enum CfdrGammaKind gamma_kind,
                                double gamma_exponent,
                                uint64_t horizon,
                                const struct CfdrTopology *topology,
                                struct CfdrEngine **out);

/**
 * # Safety
 * `engine` must come from [`cfdr_engine_new`] and not be freed twice.
 * Null is ignored.
 */
void cfdr_engine_free(struct CfdrEngine *engine);

/**
 * Start the next test and return its level. `lambda_out` may be null; it
 * receives the candidacy threshold, or a negative value if there is none.
 *
 * # Safety
 * `engine` and `level_out` must be valid.
 */
enum CfdrStatus cfdr_engine_start_test(struct CfdrEngine *engine,
                                       double *level_out,
                                       double *lambda_out);

/**
 * Report the p-value of test `index` (1-based).
 *
 * # Safety
 * `engine` must be valid; `rejected_out` may be null.
 */
enum CfdrStatus cfdr_engine_observe_outcome(struct CfdrEngine *engine,
                                            uint64_t index,
                                            double p_value,
                                            bool *rejected_out);

/**
 * No further tests will start; outstanding outcomes may still be reported.
 *
 * # Safety
 * `engine` must be valid.
 */
enum CfdrStatus cfdr_engine_close(struct CfdrEngine *engine);

/**
 * The algorithm's current FDP estimate.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum CfdrStatus cfdr_engine_fdp_hat(const struct CfdrEngine *engine, double *out);

/**
 * Rejections that have left every conflict set.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum CfdrStatus cfdr_engine_nonconflicting_rejections(const struct CfdrEngine *engine,
                                                      uint64_t *out);

/**
 * Index of the most recently started test (0 before the first start).
 *
 * # Safety
 * Both pointers must be valid.
 */
enum CfdrStatus cfdr_engine_current_index(const struct CfdrEngine *engine, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONFLICTFDR_H */
