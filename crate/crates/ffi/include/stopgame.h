#ifndef STOPGAME_H
#define STOPGAME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StopgameStatus {
  STOPGAME_STATUS_OK = 0,
  STOPGAME_STATUS_NULL_POINTER = 1,
  STOPGAME_STATUS_INVALID_UTF8 = 2,
  STOPGAME_STATUS_PARSE = 3,
  STOPGAME_STATUS_REJECTED = 4,
  STOPGAME_STATUS_INVALID_INPUT = 5,
  STOPGAME_STATUS_NO_CONVERGENCE = 6,
  STOPGAME_STATUS_BUFFER_TOO_SMALL = 7,
  STOPGAME_STATUS_INTERNAL = 8,
  STOPGAME_STATUS_PANIC = 9,
} StopgameStatus;

typedef enum StopgameStateClass {
  STOPGAME_STATE_CLASS_CONTINUATION = 0,
  STOPGAME_STATE_CLASS_STOP_P1 = 1,
  STOPGAME_STATE_CLASS_STOP_P2 = 2,
} StopgameStateClass;

/**
 * A validated model and its norm weight.
 */
typedef struct StopgameModel StopgameModel;

/**
 * A solved equilibrium, bound to the model it was computed for.
 */
typedef struct StopgameSolution StopgameSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *stopgame_last_error_message(void);

/**
 * Parses and validates a model document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum StopgameStatus stopgame_model_from_json(const char *json, struct StopgameModel **out);

/**
 * The controlled queue with default parameters, truncated at `s_max`.
 *
 * # Safety
 * `out` must be writable.
 */
enum StopgameStatus stopgame_model_default_queue(size_t s_max, struct StopgameModel **out);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum StopgameStatus stopgame_model_num_states(const struct StopgameModel *model, size_t *out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void stopgame_model_free(struct StopgameModel *model);

/**
 * Solves the game by monotone iteration from the lower obstacle.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum StopgameStatus stopgame_solve(const struct StopgameModel *model,
                                   double tol,
                                   size_t max_iter,
                                   double theta,
                                   struct StopgameSolution **out);

/**
 * Copies `u*` into `buf`, which must hold at least one entry per state.
 *
 * # Safety
 * `solution` must be a live handle; `buf` must hold `len` doubles.
 */
enum StopgameStatus stopgame_solution_values(const struct StopgameSolution *solution,
                                             double *buf,
                                             size_t len);

/**
 * Copies the per-state classification into `buf`.
 *
 * # Safety
 * `solution` must be a live handle; `buf` must hold `len` entries.
 */
enum StopgameStatus stopgame_solution_classification(const struct StopgameSolution *solution,
                                                     enum StopgameStateClass *buf,
                                                     size_t len);

/**
 * Iteration count and final residual `||T u* - u*||_W`.
 *
 * # Safety
 * `solution` must be a live handle; both outputs must be writable.
 */
enum StopgameStatus stopgame_solution_stats(const struct StopgameSolution *solution,
                                            size_t *iterations,
                                            double *residual);

/**
 * Canonical JSON of the solution. Release the string with [`stopgame_string_free`].
 *
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
enum StopgameStatus stopgame_solution_to_json(const struct StopgameSolution *solution, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void stopgame_string_free(char *s);

/**
 * # Safety
 * `solution` must be NULL or a handle not yet freed.
 */
void stopgame_solution_free(struct StopgameSolution *solution);

/**
 * Checks the dynamic-programming inequalities at tolerance `tol`.
 * `passed` receives 1 when every state satisfies them, else 0.
 *
 * # Safety
 * `solution` must be a live handle; `passed` must be writable.
 */
enum StopgameStatus stopgame_verify(const struct StopgameSolution *solution,
                                    double tol,
                                    int32_t *passed);

/**
 * Monte-Carlo payoff of the equilibrium profile from `initial`.
 *
 * # Safety
 * `solution` must be a live handle; both outputs must be writable.
 */
enum StopgameStatus stopgame_simulate(const struct StopgameSolution *solution,
                                      size_t initial,
                                      size_t paths,
                                      uint64_t seed,
                                      double *mean,
                                      double *stderr);

/**
 * Solves the row-major `rows x cols` matrix game (rows minimize).
 * `mu` and `nu` receive `rows` and `cols` probabilities.
 *
 * # Safety
 * `data` must hold `rows * cols` doubles; `mu`, `nu` and `value` must be
 * writable for `rows`, `cols` and one entries.
 */
enum StopgameStatus stopgame_matrix_game_solve(const double *data,
                                               size_t rows,
                                               size_t cols,
                                               double *value,
                                               double *mu,
                                               double *nu);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOPGAME_H */
