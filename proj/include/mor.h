/* SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the model-order-reduction toolkit. All functionality is
 * reached through opaque handles and integer status codes; the shared
 * library exports only these symbols.
 */
#ifndef MOR_H
#define MOR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes for the CLI. */
enum {
  MOR_OK = 0,
  MOR_ERR_INTERNAL = 1, /* unexpected failure */
  MOR_ERR_CONFIG = 2,   /* bad configuration or usage */
  MOR_ERR_NUMERIC = 3,  /* solver/training divergence */
  MOR_ERR_ARTIFACT = 4  /* missing or unreadable artifact */
};

typedef struct mor_config mor_config;

/* Parses a configuration file. On success *out owns a handle that must be
 * released with mor_config_free. On failure *out is NULL and
 * mor_last_error() describes the problem. */
int mor_config_load(const char* path, mor_config** out);

/* Same, from an in-memory configuration string. */
int mor_config_from_text(const char* text, mor_config** out);

void mor_config_free(mor_config* cfg);

/* Overrides a single dotted key, e.g. ("reduction.rank", "35"). */
int mor_config_set(mor_config* cfg, const char* key, const char* value);

/* Serializes the effective configuration; returns a pointer owned by the
 * handle, valid until the next call on the same handle. */
const char* mor_config_describe(mor_config* cfg);

/* Runs one pipeline stage: fom-run, pod-build, deim-build, rom-run,
 * drrnn-train, drrnn-run, uq-report, stability-check. */
int mor_run_stage(mor_config* cfg, const char* stage);

/* Newline-separated list of valid stage names (static storage). */
const char* mor_stage_names(void);

/* Thread-local message for the most recent failing call; empty string if
 * the last call succeeded. */
const char* mor_last_error(void);

const char* mor_version(void);

#ifdef __cplusplus
}
#endif

#endif /* MOR_H */
