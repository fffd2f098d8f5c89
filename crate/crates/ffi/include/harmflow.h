#ifndef HARMFLOW_H
#define HARMFLOW_H

/* Generated by cbindgen from harmflow-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirroring the CLI exit codes.
typedef enum HfStatus {
  HF_STATUS_OK = 0,
  HF_STATUS_CONFIG_ERROR = 2,
  HF_STATUS_ENGINE_ERROR = 3,
  HF_STATUS_HALTED = 4,
  HF_STATUS_NULL_POINTER = 5,
  HF_STATUS_INVALID_UTF8 = 6,
  HF_STATUS_PANIC = 7,
} HfStatus;

// Opaque parsed configuration handle.
typedef struct HfConfig {
  uint8_t _private[0];
} HfConfig;

// Opaque simulator handle (engine plus current state).
typedef struct HfSim {
  uint8_t _private[0];
} HfSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *hf_version(void);

// Copy the last error message for this thread into `buf` (truncated to
// `len - 1` bytes, always NUL-terminated when `len > 0`). Returns the full
// message length in bytes, excluding the terminator.
//
// # Safety
// `buf` must point to at least `len` writable bytes, or be null.
size_t hf_last_error(char *buf, size_t len);

// Parse a configuration document. On success writes a new handle to `out`.
//
// # Safety
// `text` must be a NUL-terminated string, `out` a valid pointer.
enum HfStatus hf_config_parse(const char *text, struct HfConfig **out);

// Parse a configuration file from a path.
//
// # Safety
// `path` must be a NUL-terminated string, `out` a valid pointer.
enum HfStatus hf_config_parse_file(const char *path, struct HfConfig **out);

// Free a configuration handle; a null pointer is ignored.
//
// # Safety
// `cfg` must come from `hf_config_parse*` and not already be freed.
void hf_config_free(struct HfConfig *cfg);

// Create a simulator from a parsed configuration.
//
// # Safety
// `cfg` must be a live config handle, `out` a valid pointer.
enum HfStatus hf_sim_new(const struct HfConfig *cfg, struct HfSim **out);

// Free a simulator handle; a null pointer is ignored.
//
// # Safety
// `sim` must come from `hf_sim_new` and not already be freed.
void hf_sim_free(struct HfSim *sim);

// Advance up to `n` steps. Writes the number of steps actually taken to
// `steps_done` (may be null). Returns `Halted` when the systole floor stops
// the flow, `Ok` otherwise.
//
// # Safety
// `sim` must be a live simulator handle.
enum HfStatus hf_sim_step(struct HfSim *sim, uint64_t n, uint64_t *steps_done);

// # Safety
// `sim` must be a live simulator handle.
double hf_sim_time(const struct HfSim *sim);

// # Safety
// `sim` must be a live simulator handle.
uint64_t hf_sim_step_count(const struct HfSim *sim);

// # Safety
// `sim` must be a live simulator handle.
double hf_sim_energy(const struct HfSim *sim);

// Squared L^2 norm of the tension field at the current state.
//
// # Safety
// `sim` must be a live simulator handle.
double hf_sim_tension_l2sq(const struct HfSim *sim);

// Squared L^2 norm of the horizontal part of the Hopf tensor.
//
// # Safety
// `sim` must be a live simulator handle.
double hf_sim_horiz_hopf_l2sq(const struct HfSim *sim);

// Whether the flow has halted at the systole floor.
//
// # Safety
// `sim` must be a live simulator handle.
bool hf_sim_halted(const struct HfSim *sim);

// Current Teichmueller parameters (a, b) and systole.
//
// # Safety
// `sim` must be a live simulator handle; out pointers may be null.
enum HfStatus hf_sim_metric(const struct HfSim *sim, double *a, double *b, double *systole);

// Write a binary checkpoint of the current state.
//
// # Safety
// `sim` must be a live simulator handle, `path` a NUL-terminated string.
enum HfStatus hf_sim_write_checkpoint(const struct HfSim *sim, const char *path);

// One-shot scenario run from a config file: emits the CSV series and JSON
// summary into the configured output directory. Returns `Halted` when the
// run stopped at the systole floor.
//
// # Safety
// `config_path` must be a NUL-terminated string.
enum HfStatus hf_run(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARMFLOW_H */
