#ifndef PAM4LINK_H
#define PAM4LINK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum Pam4Status {
  PAM4_STATUS_OK = 0,
  PAM4_STATUS_NULL_POINTER = 1,
  PAM4_STATUS_INVALID_UTF8 = 2,
  PAM4_STATUS_INVALID_ARGUMENT = 3,
  PAM4_STATUS_LENGTH_MISMATCH = 4,
  PAM4_STATUS_ALIASING = 5,
  PAM4_STATUS_SYNC_FAILURE = 6,
  PAM4_STATUS_DIVERGENCE = 7,
  PAM4_STATUS_CONFIG = 8,
  PAM4_STATUS_IO = 9,
  PAM4_STATUS_CSV = 10,
  PAM4_STATUS_OUT_OF_RANGE = 11,
  PAM4_STATUS_PANIC = 12,
} Pam4Status;

// A simulation configuration. Create with one of the `pam4_simulator_*`
// constructors and release with [`pam4_simulator_free`].
typedef struct Pam4Simulator Pam4Simulator;

// The cells of a finished sweep. Release with [`pam4_sweep_free`].
typedef struct Pam4Sweep Pam4Sweep;

// BER of one detection stage.
typedef struct Pam4StageBer {
  // False when the stage was disabled; the other fields are then zero.
  bool present;
  uint64_t bits_compared;
  uint64_t bit_errors;
  double ber;
} Pam4StageBer;

// Summary of one run. `ber` is the last enabled stage.
typedef struct Pam4BerReport {
  uint64_t seed;
  uint64_t bits_compared;
  uint64_t bit_errors;
  double ber;
  double net_rate;
  bool passes_kp4;
  bool passes_hd7;
  bool passes_hd20;
  struct Pam4StageBer ffe;
  struct Pam4StageBer dd;
  struct Pam4StageBer mlsd;
} Pam4BerReport;

// One `(point, trial)` cell of a sweep. `status` is `Ok` for successful
// runs; failed runs report their error category and a NaN `ber`.
typedef struct Pam4SweepCell {
  size_t point;
  size_t trial;
  double value;
  uint64_t seed;
  double ber;
  enum Pam4Status status;
} Pam4SweepCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library from the same thread.
const char *pam4_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pam4_version(void);

// Creates a simulator with the default configuration.
//
// # Safety
// `out` must be NULL or valid for writes.
enum Pam4Status pam4_simulator_new(struct Pam4Simulator **out);

// Creates a simulator from a named preset.
//
// # Safety
// `name` must be NULL or a NUL-terminated string; `out` must be NULL or
// valid for writes.
enum Pam4Status pam4_simulator_from_preset(const char *name, struct Pam4Simulator **out);

// Creates a simulator from a JSON configuration document.
//
// # Safety
// `json` must be NULL or a NUL-terminated string; `out` must be NULL or
// valid for writes.
enum Pam4Status pam4_simulator_from_json(const char *json, struct Pam4Simulator **out);

// Releases a simulator. NULL is ignored.
//
// # Safety
// `sim` must be NULL or a handle from this library not yet freed.
void pam4_simulator_free(struct Pam4Simulator *sim);

// Sets one configuration parameter by name, with the same names a sweep
// accepts (`alpha`, `rop_dbm`, `fiber_length_km`, `link.osnr_db`, ...).
// The configuration is left unchanged on failure.
//
// # Safety
// `sim` must be NULL or a live handle; `name` must be NULL or a
// NUL-terminated string.
enum Pam4Status pam4_simulator_set_param(struct Pam4Simulator *sim, const char *name, double value);

// Runs the configured number of frames with `seed`.
//
// # Safety
// `sim` must be NULL or a live handle; `out` must be NULL or valid for writes.
enum Pam4Status pam4_simulator_run(const struct Pam4Simulator *sim,
                                   uint64_t seed,
                                   struct Pam4BerReport *out);

// Net information rate in bit/s of a PAM-4 link at `baud` with the
// default frame layout and 20% FEC overhead.
//
// # Safety
// `out` must be NULL or valid for writes.
enum Pam4Status pam4_net_rate(double baud, double *out);

// Small-signal CD fading `20 log10|cos(...)|` in dB at `n` frequencies, for
// `length` m of fiber with `dispersion` s/m^2 at `wavelength` m. The first
// 3-dB frequency is written to `first_3db_hz` when it is not NULL.
//
// # Safety
// `freqs_hz` must be valid for `n` reads and `out_db` for `n` writes;
// `first_3db_hz` must be NULL or valid for writes.
enum Pam4Status pam4_fading_profile(double length,
                                    double dispersion,
                                    double wavelength,
                                    const double *freqs_hz,
                                    size_t n,
                                    double *out_db,
                                    double *first_3db_hz);

// Runs a sweep described by a JSON document on `jobs` worker threads
// (0 = all cores).
//
// # Safety
// `json` must be NULL or a NUL-terminated string; `out` must be NULL or
// valid for writes.
enum Pam4Status pam4_sweep_run_json(const char *json, size_t jobs, struct Pam4Sweep **out);

// Sweeps one parameter of a simulator's configuration over `n` values with
// `trials` seeds per value, derived from `master_seed`.
//
// # Safety
// `sim` must be NULL or a live handle; `param` must be NULL or a
// NUL-terminated string; `values` must be valid for `n` reads; `out` must be
// NULL or valid for writes.
enum Pam4Status pam4_sweep_run(const struct Pam4Simulator *sim,
                               const char *param,
                               const double *values,
                               size_t n,
                               size_t trials,
                               uint64_t master_seed,
                               size_t jobs,
                               struct Pam4Sweep **out);

// Number of cells in a sweep, or 0 for NULL.
//
// # Safety
// `sweep` must be NULL or a live handle.
size_t pam4_sweep_len(const struct Pam4Sweep *sweep);

// Copies cell `index` (point-major, trial-minor order).
//
// # Safety
// `sweep` must be NULL or a live handle; `out` must be NULL or valid for writes.
enum Pam4Status pam4_sweep_cell(const struct Pam4Sweep *sweep,
                                size_t index,
                                struct Pam4SweepCell *out);

// Writes the sweep in the CLI's CSV format.
//
// # Safety
// `sweep` must be NULL or a live handle; `path` must be NULL or a
// NUL-terminated string.
enum Pam4Status pam4_sweep_write_csv(const struct Pam4Sweep *sweep, const char *path);

// Releases a sweep. NULL is ignored.
//
// # Safety
// `sweep` must be NULL or a handle from this library not yet freed.
void pam4_sweep_free(struct Pam4Sweep *sweep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAM4LINK_H */
