#ifndef ROUGHBSDE_C_H
#define ROUGHBSDE_C_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* C interface to the rough backward equation library. Every function returns a
 * status code; RB_OK means the call itself succeeded. The message behind the most
 * recent failure on the calling thread is available from rb_last_error(). */

typedef enum rb_status {
  RB_OK = 0,
  RB_AUDIT = 1,            /* a numerical audit failed where the contract demands an error */
  RB_CONFIG = 2,           /* malformed or rejected configuration */
  RB_INVALID_ARGUMENT = 3, /* caller passed inconsistent arguments */
  RB_NUMERIC = 4,          /* numerical failure inside a computation */
  RB_UNKNOWN = 5           /* unexpected failure */
} rb_status;

/* Library version, static storage. */
const char* rb_version(void);

/* Message of the last failing call on this thread; empty string when none. */
const char* rb_last_error(void);

/* Opaque key=value experiment configuration. */
typedef struct rb_config rb_config;

rb_status rb_config_load(const char* path, rb_config** out);
rb_status rb_config_parse(const char* text, rb_config** out);
void rb_config_free(rb_config* cfg);

/* Sets or replaces one key. */
rb_status rb_config_set(rb_config* cfg, const char* key, const char* value);

/* Copies the value of key into buf, NUL terminated. Fails with
 * RB_INVALID_ARGUMENT when the key is absent or buf is too small. */
rb_status rb_config_get(const rb_config* cfg, const char* key, char* buf, size_t buf_len);

/* Checks the experiment id, the key whitelist, and numeric well-formedness. */
rb_status rb_config_validate(const rb_config* cfg);

/* FNV-1a hash of the canonical serialization; names the output directory. */
uint64_t rb_config_hash(const rb_config* cfg);

typedef struct rb_run_result {
  int exit_code;      /* 0 pass, 1 audit failure, 2 config error */
  char out_dir[1024]; /* empty on config errors */
  char detail[1024];  /* one-line outcome summary */
} rb_run_result;

/* Runs the configured experiment. out_root overrides the output root when non-NULL
 * and non-empty; otherwise the config's out_dir, the ROUGHBSDE_OUTPUT_ROOT
 * environment variable, and the working directory are tried in that order. Returns
 * RB_OK whenever the run executed, including failing runs; the verdict is in
 * result->exit_code. */
rb_status rb_run(const rb_config* cfg, const char* out_root, rb_run_result* result);

/* Writes one "id\tsummary\n" line per experiment into buf, NUL terminated. *needed
 * (optional) receives the required buffer size including the terminator; when buf
 * is too small the call fails with RB_INVALID_ARGUMENT and writes nothing. */
rb_status rb_list_experiments(char* buf, size_t buf_len, size_t* needed);

/* q-variation of a path given as n_points rows of dim columns, q >= 1. */
rb_status rb_pvariation(const double* values, size_t n_points, int dim, double q, double* out);

#ifdef __cplusplus
}
#endif

#endif
