#ifndef DISSIPATIVE_DICKE_H
#define DISSIPATIVE_DICKE_H

/* Generated by cbindgen from the dissipative-dicke-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DdStatus {
  DD_STATUS_OK = 0,
  DD_STATUS_NULL_POINTER = 1,
  DD_STATUS_INVALID_ARGUMENT = 2,
  DD_STATUS_NUMERICAL_FAILURE = 3,
  DD_STATUS_NORMAL_PHASE = 4,
  DD_STATUS_OUT_OF_RANGE = 5,
  DD_STATUS_PANIC = 6,
} DdStatus;

typedef enum DdPhase {
  DD_PHASE_NORMAL = 0,
  DD_PHASE_SUPERRADIANT = 1,
} DdPhase;

typedef enum DdBranch {
  DD_BRANCH_PLUS = 0,
  DD_BRANCH_MINUS = 1,
} DdBranch;

typedef enum DdDissipator {
  DD_DISSIPATOR_NONE = 0,
  DD_DISSIPATOR_BARE = 1,
  DD_DISSIPATOR_AD_HOC_ROTATED = 2,
  DD_DISSIPATOR_DRESSED = 3,
} DdDissipator;

// Superradiant-frame diagonalization for one branch.
typedef struct DdDiagonalization DdDiagonalization;

// Model parameters.
typedef struct DdModel DdModel;

// Recorded semiclassical trajectory.
typedef struct DdTrajectory DdTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library (static storage, never freed).
const char *dd_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len - 1` bytes) and returns the full message length in
// bytes, excluding the terminator. `buf` may be NULL to query the length.
//
// # Safety
// `buf` must be NULL or point to at least `len` writable bytes.
size_t dd_last_error_message(char *buf, size_t len);

// Creates a model handle after validating the parameters.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum DdStatus dd_model_new(double omega,
                           double e_z,
                           double g,
                           double eps,
                           double s,
                           double kappa1,
                           double kappa2,
                           struct DdModel **out);

// # Safety
// `model` must be NULL or a handle from [`dd_model_new`] not yet freed.
void dd_model_free(struct DdModel *model);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum DdStatus dd_model_phase(const struct DdModel *model, enum DdPhase *out);

// Semiclassical energy of a state.
//
// # Safety
// `model` must be a live handle, `state` must point to 5 doubles and `out`
// must be writable.
enum DdStatus dd_model_energy(const struct DdModel *model, const double *state, double *out);

// Energy minimum of the given branch. Fails with
// [`DdStatus::NormalPhase`] outside the superradiant phase.
//
// # Safety
// `model` must be a live handle, `out_state` must point to 5 writable
// doubles and `out_energy` must be writable.
enum DdStatus dd_model_superradiant_minimum(const struct DdModel *model,
                                            enum DdBranch branch,
                                            double *out_state,
                                            double *out_energy);

// Analytic stationary points of the bare dissipator: the trivial point
// followed, when present, by the two tilted points. Writes up to
// `capacity` states (5 doubles each) into `out_states` and the total
// number of points into `out_count`; fails with [`DdStatus::OutOfRange`]
// if `capacity` is too small (`out_count` is still written).
//
// # Safety
// `model` must be a live handle, `out_states` must point to
// `5 * capacity` writable doubles and `out_count` must be writable.
enum DdStatus dd_model_bare_fixed_points(const struct DdModel *model,
                                         double *out_states,
                                         size_t capacity,
                                         size_t *out_count);

// Diagonalizes the fluctuations around the minimum of `branch`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum DdStatus dd_diagonalize(const struct DdModel *model,
                             enum DdBranch branch,
                             struct DdDiagonalization **out);

// # Safety
// `d` must be NULL or a handle from [`dd_diagonalize`] not yet freed.
void dd_diagonalization_free(struct DdDiagonalization *d);

// Polariton energies ε₁ ≤ ε₂.
//
// # Safety
// `d` must be a live handle; the out-pointers must be writable.
enum DdStatus dd_diagonalization_energies(const struct DdDiagonalization *d,
                                          double *out_eps1,
                                          double *out_eps2);

// Spin tilt θ, Bogoliubov angle χ and condensate momentum p₀.
//
// # Safety
// `d` must be a live handle; the out-pointers must be writable.
enum DdStatus dd_diagonalization_angles(const struct DdDiagonalization *d,
                                        double *out_theta,
                                        double *out_chi,
                                        double *out_p0);

// Integrates the semiclassical equations of motion with adaptive
// Dormand–Prince steps. The dressed dissipator uses the weights
// (κ₁, κ₂) of the model.
//
// # Safety
// `model` must be a live handle, `initial` must point to 5 doubles and
// `out` must be writable.
enum DdStatus dd_simulate(const struct DdModel *model,
                          enum DdDissipator dissipator,
                          enum DdBranch branch,
                          const double *initial,
                          double t_end,
                          double rtol,
                          double atol,
                          struct DdTrajectory **out);

// # Safety
// `t` must be NULL or a handle from [`dd_simulate`] not yet freed.
void dd_trajectory_free(struct DdTrajectory *t);

// Number of recorded samples.
//
// # Safety
// `t` must be a live handle and `out` writable.
enum DdStatus dd_trajectory_len(const struct DdTrajectory *t, size_t *out);

// Sample `index` (0-based): time and state.
//
// # Safety
// `t` must be a live handle, `out_time` writable and `out_state` must point
// to 5 writable doubles.
enum DdStatus dd_trajectory_sample(const struct DdTrajectory *t,
                                   size_t index,
                                   double *out_time,
                                   double *out_state);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISSIPATIVE_DICKE_H */
