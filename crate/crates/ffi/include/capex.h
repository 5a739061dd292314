#ifndef CAPEX_H
#define CAPEX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every call.
 */
typedef enum CapexStatus {
  CAPEX_STATUS_OK = 0,
  /**
   * Null pointer or non-UTF-8 string.
   */
  CAPEX_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Input rejected: bad definition, binding or value.
   */
  CAPEX_STATUS_VALIDATION = 2,
  /**
   * Request not allowed in the session's current state.
   */
  CAPEX_STATUS_CONFLICT = 3,
  /**
   * Runtime failure.
   */
  CAPEX_STATUS_RUNTIME = 4,
  /**
   * The library panicked; the handle should not be used again.
   */
  CAPEX_STATUS_PANIC = 5,
} CapexStatus;

/**
 * A learning session.
 */
typedef struct CapexSession CapexSession;

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *capex_last_error(void);

/**
 * Library version as a static string.
 */
const char *capex_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void capex_string_free(char *s);

/**
 * Creates a session from a JSON request
 * (`{"scenario": "<bundled name>" | {...}, "seed": 0, "mode": "active", ...}`).
 *
 * # Safety
 * `request_json` must be a valid C string; `out` must be writable.
 */
enum CapexStatus capex_session_new(const char *request_json, struct CapexSession **out);

/**
 * Restores a session from a snapshot produced by `capex_session_snapshot`.
 *
 * # Safety
 * As for `capex_session_new`.
 */
enum CapexStatus capex_session_restore(const char *snapshot_json, struct CapexSession **out);

/**
 * Destroys a session. Null is ignored.
 *
 * # Safety
 * `s` must come from `capex_session_new`/`capex_session_restore` and not be used afterwards.
 */
void capex_session_free(struct CapexSession *s);

/**
 * Proposes the next experiment (or repeats the pending one) as JSON.
 * With `redraw` set while an experiment is pending, returns `Conflict`.
 *
 * # Safety
 * `s` must be a live session; `out_json` must be writable.
 */
enum CapexStatus capex_session_next_query(struct CapexSession *s, bool redraw, char **out_json);

/**
 * Reports the outcome of the pending experiment
 * (`{"outcome": {...}, "situation": {...}, "attributes": {...}}`).
 * On failure the session is unchanged.
 *
 * # Safety
 * As for `capex_session_next_query`; `observation_json` must be a valid C string.
 */
enum CapexStatus capex_session_observe(struct CapexSession *s,
                                       const char *observation_json,
                                       char **out_json);

/**
 * Full session state (model, trace, pending proposal, scores) as JSON.
 *
 * # Safety
 * As for `capex_session_next_query`.
 */
enum CapexStatus capex_session_state(struct CapexSession *s, char **out_json);

/**
 * Score report at `threshold` (NaN selects the session default).
 *
 * # Safety
 * As for `capex_session_next_query`.
 */
enum CapexStatus capex_session_scores(struct CapexSession *s, double threshold, char **out_json);

/**
 * Serialized session, suitable for `capex_session_restore`.
 *
 * # Safety
 * As for `capex_session_next_query`.
 */
enum CapexStatus capex_session_snapshot(struct CapexSession *s, char **out_json);

/**
 * Current model error of the session.
 *
 * # Safety
 * `s` must be a live session; `out` must be writable.
 */
enum CapexStatus capex_session_model_error(struct CapexSession *s, double *out);

/**
 * Expected KL risk of a Dirichlet row with pseudo-counts `alpha[0..len]`.
 *
 * # Safety
 * `alpha` must point to `len` readable doubles; `out` must be writable.
 */
enum CapexStatus capex_dirichlet_expected_kl(const double *alpha, size_t len, double *out);

/**
 * Runs a simulated trial
 * (`{"scenario": "...", "mode": "active", "iters": 150, "seed": 0, "random_truth": false}`)
 * and returns `{"trace": [...], "kl_to_truth": [...], "model": {...}}`.
 *
 * # Safety
 * `request_json` must be a valid C string; `out_json` must be writable.
 */
enum CapexStatus capex_simulate(const char *request_json, char **out_json);

#endif  /* CAPEX_H */
