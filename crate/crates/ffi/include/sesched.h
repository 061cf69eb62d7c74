#ifndef SESCHED_H
#define SESCHED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SeschedStatus {
  SESCHED_STATUS_OK = 0,
  SESCHED_STATUS_NULL_POINTER = 1,
  SESCHED_STATUS_VALIDATION = 2,
  SESCHED_STATUS_CONVERGENCE = 3,
  SESCHED_STATUS_CAPACITY = 4,
  SESCHED_STATUS_SHAPE = 5,
  SESCHED_STATUS_DIVERGED = 6,
  SESCHED_STATUS_IO = 7,
  SESCHED_STATUS_PANIC = 8,
} SeschedStatus;

typedef enum SeschedReward {
  SESCHED_REWARD_SUM_MSE = 0,
  SESCHED_REWARD_SUM_AOI = 1,
  SESCHED_REWARD_PRODUCT_MSE = 2,
} SeschedReward;

/**
 * Simulated environment with its own random stream.
 */
typedef struct SeschedEnv SeschedEnv;

/**
 * Value-iteration result with its tabular policy.
 */
typedef struct SeschedSolution SeschedSolution;

/**
 * Sensors, processes and channel model.
 */
typedef struct SeschedSystem SeschedSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *sesched_last_error(void);

/**
 * Generates a random system with the default generator settings.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SeschedStatus sesched_system_generate(size_t sensors,
                                           size_t channels,
                                           uint64_t seed,
                                           struct SeschedSystem **out);

/**
 * # Safety
 * `system` must be NULL or a handle from `sesched_system_generate` not yet freed.
 */
void sesched_system_free(struct SeschedSystem *system);

/**
 * # Safety
 * `system` must be a live handle and `sensors`, `channels` writable.
 */
enum SeschedStatus sesched_system_dims(const struct SeschedSystem *system,
                                       size_t *sensors,
                                       size_t *channels);

/**
 * Sum of estimation MSEs at the given AoI vector.
 *
 * # Safety
 * `tau` must point to `tau_len` values and `out` be writable.
 */
enum SeschedStatus sesched_system_sum_mse(const struct SeschedSystem *system,
                                          const uint32_t *tau,
                                          size_t tau_len,
                                          double *out);

/**
 * Solves the truncated MDP by value iteration.
 *
 * # Safety
 * `system` must be a live handle and `out` writable.
 */
enum SeschedStatus sesched_solve(const struct SeschedSystem *system,
                                 uint32_t tau_max,
                                 enum SeschedReward reward,
                                 double gamma,
                                 double tol,
                                 struct SeschedSolution **out);

/**
 * # Safety
 * `solution` must be NULL or a handle from `sesched_solve` not yet freed.
 */
void sesched_solution_free(struct SeschedSolution *solution);

/**
 * # Safety
 * `solution` must be a live handle and `out` writable.
 */
enum SeschedStatus sesched_solution_num_states(const struct SeschedSolution *solution, size_t *out);

/**
 * Optimal action at a state; AoI beyond `tau_max` is looked up at the cap.
 * `action_out` receives one channel index per sensor.
 *
 * # Safety
 * Array pointers must cover their lengths.
 */
enum SeschedStatus sesched_solution_action(const struct SeschedSolution *solution,
                                           const uint32_t *tau,
                                           size_t tau_len,
                                           const uint8_t *h,
                                           size_t h_len,
                                           uint8_t *action_out,
                                           size_t action_len);

/**
 * Optimal value at a state inside the truncated space.
 *
 * # Safety
 * Array pointers must cover their lengths and `out` be writable.
 */
enum SeschedStatus sesched_solution_value(const struct SeschedSolution *solution,
                                          const uint32_t *tau,
                                          size_t tau_len,
                                          const uint8_t *h,
                                          size_t h_len,
                                          double *out);

/**
 * Creates an environment over `system` with unbounded AoI, starting from
 * all-ones AoI and a random channel matrix.
 *
 * # Safety
 * `system` must be a live handle and `out` writable. The environment keeps
 * its own reference; the system handle may be freed afterwards.
 */
enum SeschedStatus sesched_env_new(const struct SeschedSystem *system,
                                   enum SeschedReward reward,
                                   uint64_t seed,
                                   struct SeschedEnv **out);

/**
 * # Safety
 * `env` must be NULL or a handle from `sesched_env_new` not yet freed.
 */
void sesched_env_free(struct SeschedEnv *env);

/**
 * Copies the current state into `tau_out` (N entries) and `h_out` (N·M).
 *
 * # Safety
 * Array pointers must cover their lengths.
 */
enum SeschedStatus sesched_env_state(const struct SeschedEnv *env,
                                     uint32_t *tau_out,
                                     size_t tau_len,
                                     uint8_t *h_out,
                                     size_t h_len);

/**
 * Applies `action` and writes the reward of the state it was taken in.
 *
 * # Safety
 * `action` must point to `action_len` entries and `reward_out` be writable.
 */
enum SeschedStatus sesched_env_step(struct SeschedEnv *env,
                                    const uint8_t *action,
                                    size_t action_len,
                                    double *reward_out);

/**
 * Checks a state against the system's dimensions and channel levels.
 *
 * # Safety
 * Array pointers must cover their lengths.
 */
enum SeschedStatus sesched_system_check_state(const struct SeschedSystem *system,
                                              const uint32_t *tau,
                                              size_t tau_len,
                                              const uint8_t *h,
                                              size_t h_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SESCHED_H */
