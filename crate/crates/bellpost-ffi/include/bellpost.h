#ifndef BELLPOST_H
#define BELLPOST_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the library's error variants.
 */
typedef enum BpStatus {
  BP_STATUS_OK = 0,
  BP_STATUS_INVALID_ARGUMENT = 1,
  BP_STATUS_PRECONDITION = 2,
  BP_STATUS_NUMERIC = 3,
  BP_STATUS_EMPTY_SUBENSEMBLE = 4,
  BP_STATUS_SEARCH_EXHAUSTED = 5,
  BP_STATUS_CONFIG = 6,
  BP_STATUS_SCHEMA = 7,
  BP_STATUS_IO = 8,
  BP_STATUS_NULL_POINTER = 9,
  BP_STATUS_PANIC = 10,
} BpStatus;

/**
 * Opaque density-matrix handle.
 */
typedef struct BpState BpState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the current thread's last error message into `buffer` (NUL
 * terminated, truncated to `length` bytes). Returns the full message length
 * in bytes, excluding the terminator.
 *
 * # Safety
 * `buffer` must point to at least `length` writable bytes, or be null
 * (in which case only the required length is returned).
 */
uintptr_t bp_last_error_message(char *buffer, uintptr_t length);

/**
 * Ground-truth classical readout correlation for settings `a` and `b`
 * (quadrature oracle, no sampling).
 *
 * # Safety
 * `out` must be a valid pointer to a writable f64.
 */
enum BpStatus bp_oracle_correlation(double a_x,
                                    double a_y,
                                    double a_z,
                                    double b_x,
                                    double b_y,
                                    double b_z,
                                    bool postselect,
                                    bool flip_bob,
                                    double *out);

/**
 * Monte Carlo classical correlation estimate for one setting pair.
 *
 * # Safety
 * All four out-pointers must be valid writable locations.
 */
enum BpStatus bp_classical_correlation(uint64_t seed,
                                       uint64_t trials,
                                       double a_x,
                                       double a_y,
                                       double a_z,
                                       double b_x,
                                       double b_y,
                                       double b_z,
                                       bool postselect,
                                       bool flip_bob,
                                       double *out_mean,
                                       double *out_std_error,
                                       uint64_t *out_n_total,
                                       uint64_t *out_n_kept);

/**
 * New two-qubit singlet handle.
 *
 * # Safety
 * `out` must be a valid pointer to a writable handle slot.
 */
enum BpStatus bp_state_singlet(struct BpState **out);

/**
 * New qubit Werner-state handle (equal mixture of noise and singlet).
 *
 * # Safety
 * `out` must be a valid pointer to a writable handle slot.
 */
enum BpStatus bp_state_werner_qubit(struct BpState **out);

/**
 * New d-dimensional Werner-family handle with flip parameter `phi`.
 *
 * # Safety
 * `out` must be a valid pointer to a writable handle slot.
 */
enum BpStatus bp_state_werner_family(uintptr_t d, double phi, struct BpState **out);

/**
 * Release a state handle. Null is a no-op.
 *
 * # Safety
 * `state` must be null or a pointer previously returned by a `bp_state_*`
 * constructor, not yet freed.
 */
void bp_state_free(struct BpState *state);

/**
 * Tr(rho (sigma.a x sigma.b)) for a two-qubit state handle.
 *
 * # Safety
 * `state` must be a live handle; `out` a valid writable f64 pointer.
 */
enum BpStatus bp_spin_correlation(const struct BpState *state,
                                  double a_x,
                                  double a_y,
                                  double a_z,
                                  double b_x,
                                  double b_y,
                                  double b_z,
                                  double *out);

/**
 * Joint firing probability of rank-1 spin projectors along `a` and `b`.
 *
 * # Safety
 * `state` must be a live handle; `out` a valid writable f64 pointer.
 */
enum BpStatus bp_joint_probability_spin(const struct BpState *state,
                                        double a_x,
                                        double a_y,
                                        double a_z,
                                        double b_x,
                                        double b_y,
                                        double b_z,
                                        double *out);

/**
 * Settings-optimal CHSH value of a two-qubit state handle.
 *
 * # Safety
 * `state` must be a live handle; `out` a valid writable f64 pointer.
 */
enum BpStatus bp_chsh_quantum_max(const struct BpState *state, double *out);

/**
 * Minimum eigenvalue of the partial transpose on the second factor.
 *
 * # Safety
 * `state` must be a live handle; `out` a valid writable f64 pointer.
 */
enum BpStatus bp_ppt_min_eigenvalue(const struct BpState *state, double *out);

/**
 * Find a hidden vector for the 45-degree rotated basis pair whose direct
 * fine value of P_u is 1 while the coarse value of P_uv is 0. Writes the
 * three real components and the number of rejection samples used.
 *
 * # Safety
 * `out_r` must point to three writable f64 slots; `out_attempts` to one
 * writable u64.
 */
enum BpStatus bp_find_paradox(uint64_t seed, double *out_r, uint64_t *out_attempts);

/**
 * Load a TOML experiment configuration and run it; CSV artifacts land in
 * the configured (or overridden) output directory.
 *
 * # Safety
 * `config_path` must be a valid NUL-terminated UTF-8 path. `out_dir` may be
 * null to keep the configured directory.
 */
enum BpStatus bp_run_experiment(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BELLPOST_H */
