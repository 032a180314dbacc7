#ifndef TUBELAB_H
#define TUBELAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TubelabStatus {
  TUBELAB_STATUS_OK = 0,
  TUBELAB_STATUS_NULL_POINTER = 1,
  TUBELAB_STATUS_INVALID_ARGUMENT = 2,
  TUBELAB_STATUS_NUMERICAL = 3,
  TUBELAB_STATUS_IO = 4,
  TUBELAB_STATUS_PANIC = 5,
} TubelabStatus;

/**
 * Run configuration handle.
 */
typedef struct TubelabConfig TubelabConfig;

/**
 * Meridian mesh handle.
 */
typedef struct TubelabMesh TubelabMesh;

/**
 * Ground mode of the unit (N−1)-ball and the half-sphere constant.
 */
typedef struct TubelabCrossSection {
  double sqrt_lambda1;
  double lambda1;
  double norm_constant;
  double upsilon;
} TubelabCrossSection;

/**
 * sign · mantissa · e^{exponent}; sign is −1, 0 or 1.
 */
typedef struct TubelabAmplitude {
  int8_t sign;
  double exponent;
  double mantissa;
} TubelabAmplitude;

/**
 * Two-exponential tube fit A e^{κ(t−1)/ε} + B e^{−κ(t−1)/ε}.
 */
typedef struct TubelabModeFit {
  struct TubelabAmplitude a;
  struct TubelabAmplitude b;
  struct TubelabAmplitude c;
  double window_lo;
  double window_hi;
  double residual;
  bool b_resolved;
} TubelabModeFit;

/**
 * Profile constants of the configuration (k̃-dependent norms are omitted).
 */
typedef struct TubelabProfileConstants {
  double lambda_k0;
  double d0;
  double c_phi;
  double c_phihat;
  double m_phihat;
  double kappa_h;
} TubelabProfileConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length without
 * the terminator, so a call with `len = 0` sizes the buffer.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t tubelab_last_error(char *buf, size_t len);

/**
 * # Safety
 * `out` must point to writable storage.
 */
enum TubelabStatus tubelab_cross_section(size_t n, struct TubelabCrossSection *out_);

struct TubelabAmplitude tubelab_amplitude_from_double(double x);

/**
 * e^x without overflow.
 */
struct TubelabAmplitude tubelab_amplitude_exp(double x);

struct TubelabAmplitude tubelab_amplitude_mul(struct TubelabAmplitude a, struct TubelabAmplitude b);

struct TubelabAmplitude tubelab_amplitude_div(struct TubelabAmplitude a, struct TubelabAmplitude b);

struct TubelabAmplitude tubelab_amplitude_add(struct TubelabAmplitude a, struct TubelabAmplitude b);

/**
 * ln|a|; −∞ for zero.
 */
double tubelab_amplitude_ln_abs(struct TubelabAmplitude a);

/**
 * Converts to a double, failing with `NUMERICAL` when out of range.
 *
 * # Safety
 * `out` must point to writable storage.
 */
enum TubelabStatus tubelab_amplitude_to_double(struct TubelabAmplitude a, double *out_);

/**
 * Fits the tube samples (t[i], phi[i]), i < n.
 *
 * # Safety
 * `t` and `phi` must be valid for `n` reads, `out` for one write.
 */
enum TubelabStatus tubelab_fit_channel_mode(const double *t,
                                            const double *phi,
                                            size_t n,
                                            double eps,
                                            double kappa,
                                            struct TubelabModeFit *out_);

/**
 * Default configuration; never null.
 */
struct TubelabConfig *tubelab_config_default(void);

/**
 * Parses a JSON configuration (missing fields take defaults) and validates it.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `out` valid for one write.
 */
enum TubelabStatus tubelab_config_from_json(const char *json, struct TubelabConfig **out_);

/**
 * Sets the mesh and profile element order (1 or 2).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum TubelabStatus tubelab_config_set_order(struct TubelabConfig *cfg, size_t order);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void tubelab_config_free(struct TubelabConfig *cfg);

/**
 * Builds the dumbbell meridian mesh of the configuration for tube radius `eps`.
 *
 * # Safety
 * `cfg` must be a live handle, `out` valid for one write.
 */
enum TubelabStatus tubelab_mesh_dumbbell(const struct TubelabConfig *cfg,
                                         double eps,
                                         struct TubelabMesh **out_);

/**
 * Vertex and triangle counts.
 *
 * # Safety
 * `mesh` must be a live handle; the outputs may be null.
 */
enum TubelabStatus tubelab_mesh_counts(const struct TubelabMesh *mesh,
                                       size_t *vertices,
                                       size_t *triangles);

/**
 * Copies vertex coordinates as (x₁, ρ) pairs into `xy`, which holds `cap`
 * doubles and must fit 2 · vertex count.
 *
 * # Safety
 * `mesh` must be a live handle, `xy` valid for `cap` writes.
 */
enum TubelabStatus tubelab_mesh_vertices(const struct TubelabMesh *mesh, double *xy, size_t cap);

/**
 * # Safety
 * `mesh` must be null or a handle not yet freed.
 */
void tubelab_mesh_free(struct TubelabMesh *mesh);

/**
 * Computes (or reads from the configuration's cache) the profile constants.
 *
 * # Safety
 * `cfg` must be a live handle, `out` valid for one write.
 */
enum TubelabStatus tubelab_profile_constants(const struct TubelabConfig *cfg,
                                             struct TubelabProfileConstants *out_);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUBELAB_H */
