/* C interface to the lane-following workbench.
 *
 * All entry points return a gvfl_status; on failure gvfl_last_error() gives
 * a human-readable message for the calling thread.  Strings are UTF-8 paths
 * or config values.  Handles are opaque and must be freed with their
 * destroy function exactly once. */
#ifndef GVF_LANE_H
#define GVF_LANE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gvfl_status {
  GVFL_OK = 0,
  GVFL_INVALID_ARGUMENT = 1, /* bad key, value, range, or missing input */
  GVFL_IO_ERROR = 2,         /* file missing, unreadable, or malformed */
  GVFL_STATE_ERROR = 3,      /* operation not valid in the current state */
  GVFL_NUMERIC_ERROR = 4     /* non-finite values or diverging training */
} gvfl_status;

const char* gvfl_version(void);

/* Message from the most recent failing call on this thread ("" after a
 * success). */
const char* gvfl_last_error(void);

/* ------------------------------------------------------------------ */
/* Run configuration: flat string key=value with typed defaults.      */

typedef struct gvfl_config gvfl_config;

gvfl_config* gvfl_config_create(void);
void gvfl_config_destroy(gvfl_config* cfg);

gvfl_status gvfl_config_set(gvfl_config* cfg, const char* key,
                            const char* value);

/* Applies "key=value" lines from a file; '#' starts a comment. */
gvfl_status gvfl_config_load(gvfl_config* cfg, const char* path);

/* Copies the value into buf (cap includes the terminator).  out_len, if
 * non-NULL, receives the full value length; GVFL_INVALID_ARGUMENT is
 * returned when the buffer is too small. */
gvfl_status gvfl_config_get(const gvfl_config* cfg, const char* key, char* buf,
                            size_t cap, size_t* out_len);

/* ------------------------------------------------------------------ */
/* Pipeline commands.  Each writes its artifacts under out_dir.       */

/* Drives the scripted explorer over procedurally generated tracks and logs
 * episodes plus the tracks themselves. */
gvfl_status gvfl_collect(const gvfl_config* cfg, const char* out_dir);

/* Trains the predictive bank and the behavior discriminator from logged
 * episodes under data_dir. */
gvfl_status gvfl_train_gvf(const gvfl_config* cfg, const char* data_dir,
                           const char* out_dir);

/* Trains the control agent selected by the "method" key.  Online methods
 * (gvf-ddpg, ddpg-image) ignore data_dir (pass NULL); offline methods
 * (gvf-bcq, e2e-bcq) require it. */
gvfl_status gvfl_train_agent(const gvfl_config* cfg, const char* data_dir,
                             const char* out_dir);

/* Rolls a trained model (model_dir from train-agent) over the configured
 * evaluation tracks.  With model_dir NULL, evaluates the classical
 * controller (requires method=classical). */
gvfl_status gvfl_evaluate(const gvfl_config* cfg, const char* model_dir,
                          const char* out_dir);

/* Aggregates metric summaries from several evaluation directories into a
 * tab-separated table with mean and standard deviation rows. */
gvfl_status gvfl_report(const char* const* run_dirs, size_t n_dirs,
                        const char* out_file);

/* Describes an artifact (episode log, checkpoint, track, CSV).  On success
 * *out_text is heap-allocated; release it with gvfl_string_free. */
gvfl_status gvfl_inspect(const char* path, char** out_text);

void gvfl_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* GVF_LANE_H */
