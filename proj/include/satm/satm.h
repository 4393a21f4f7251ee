#ifndef SATM_H
#define SATM_H

/* Plain C interface to the summarizer library. Every call that can fail
   returns a satm_status; the message for the most recent failure on the
   calling thread is available from satm_last_error(). Strings handed out by
   the library must be released with satm_string_free(). */

#if defined(_WIN32)
#define SATM_API __declspec(dllexport)
#else
#define SATM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  SATM_OK = 0,
  SATM_ERR_VALIDATION = 1, /* bad arguments, config or missing files */
  SATM_ERR_RUNTIME = 2     /* everything else, including numeric divergence */
} satm_status;

typedef struct satm_config satm_config;
typedef struct satm_model satm_model;

SATM_API const char* satm_version(void);
/* Empty string when the last call on this thread succeeded. */
SATM_API const char* satm_last_error(void);
SATM_API void satm_string_free(char* s);

SATM_API satm_status satm_config_new(satm_config** out);
SATM_API satm_status satm_config_load(const char* path, satm_config** out);
SATM_API satm_status satm_config_set(satm_config* config, const char* key, const char* value);
/* *out is NULL when the key is unset. */
SATM_API satm_status satm_config_get(const satm_config* config, const char* key, char** out);
SATM_API void satm_config_free(satm_config* config);

/* Runs a command by name ("gen-data", "train", "summarize", "evaluate",
   "inspect-topics", "export-attention", "export-topic-vectors", "sweep").
   When log is non-NULL it receives the progress text. */
SATM_API satm_status satm_run_command(const char* command, const satm_config* config, char** log);

SATM_API satm_status satm_model_load(const char* checkpoint_path, satm_model** out);
/* dialogue_json is one corpus line: {"id":..,"utterances":[{"role":..,"text":..}]}. */
SATM_API satm_status satm_model_summarize(satm_model* model, const char* dialogue_json, char** summary);
SATM_API void satm_model_free(satm_model* model);

#ifdef __cplusplus
}
#endif

#endif
