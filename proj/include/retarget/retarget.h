#ifndef RETARGET_RETARGET_H
#define RETARGET_RETARGET_H

/*
 * C interface to the retarget library.
 *
 * Every call returns a retarget_status. On failure a message describing the
 * error is available from retarget_last_error() on the same thread until the
 * next call into the library. Strings and buffers handed out by the library
 * are released with retarget_free().
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RETARGET_API __declspec(dllexport)
#else
#define RETARGET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum retarget_status {
  RETARGET_OK = 0,
  RETARGET_INVALID_ARGUMENT = 1,
  RETARGET_IO = 2,
  RETARGET_CHECKSUM = 3,
  RETARGET_SHAPE = 4,
  RETARGET_DEGENERATE_TRANSFORM = 5,
  RETARGET_NON_FINITE_LOSS = 6,
  RETARGET_CONFIG = 7,
  RETARGET_TOO_LARGE = 8,
  RETARGET_NOT_READY = 9,
  RETARGET_INTERNAL = 10
} retarget_status;

typedef struct retarget_model retarget_model;
typedef struct retarget_server retarget_server;

RETARGET_API const char* retarget_version(void);
RETARGET_API const char* retarget_status_name(retarget_status status);
RETARGET_API const char* retarget_last_error(void);
RETARGET_API void retarget_free(void* ptr);

/* Flat JSON config for a preset: "default" or "desk". */
RETARGET_API retarget_status retarget_default_config_json(const char* preset, char** out_json);

/* Receives each train_step telemetry record as a JSON line. */
typedef void (*retarget_progress_fn)(const char* record_json, void* user);

typedef struct retarget_train_options {
  const char* image_path;      /* PNG; ignored when resuming */
  const char* preset;          /* "default" or "desk"; NULL means "default" */
  const char* config_path;     /* optional flat JSON file applied over the preset */
  const char* overrides_json;  /* optional flat JSON object applied last */
  const char* out_dir;         /* required */
  const char* resume_path;     /* optional checkpoint to continue from */
  retarget_progress_fn progress;
  void* progress_user;
} retarget_train_options;

/* Trains and writes out_dir/telemetry.jsonl, periodic snapshots and
 * out_dir/checkpoint.ckpt. When resuming, overrides are applied to the
 * checkpoint's config. */
RETARGET_API retarget_status retarget_train(const retarget_train_options* options);

RETARGET_API retarget_status retarget_model_load(const char* checkpoint_path, retarget_model** out_model);
RETARGET_API void retarget_model_free(retarget_model* model);
RETARGET_API retarget_status retarget_model_input_dims(const retarget_model* model, int64_t* height,
                                                       int64_t* width);
RETARGET_API retarget_status retarget_model_meta_json(const retarget_model* model, char** out_json);

/* request_json is a synthesis request record. max_side <= 0 selects the
 * default limit. */
RETARGET_API retarget_status retarget_model_synthesize_png(const retarget_model* model, const char* request_json,
                                                           int64_t max_side, unsigned char** out_png,
                                                           size_t* out_len);
RETARGET_API retarget_status retarget_model_synthesize_to_file(const retarget_model* model,
                                                               const char* request_json, int64_t max_side,
                                                               const char* out_path);

/* grid_json is a JSON array of requests or one request per line. Metrics are
 * taken against input_path, or the checkpoint's stored input when NULL. The
 * report (one record per line, in grid order) is written to report_path. */
RETARGET_API retarget_status retarget_model_eval(const retarget_model* model, const char* grid_json,
                                                 const char* input_path, const char* report_path);

/* Binds immediately and loads the checkpoint in the background; /health
 * answers 503 until loading completes. port 0 picks a free port. */
RETARGET_API retarget_status retarget_server_start(const char* checkpoint_path, const char* host, int port,
                                                   int64_t max_side, retarget_server** out_server);
RETARGET_API int retarget_server_port(const retarget_server* server);
RETARGET_API int retarget_server_ready(const retarget_server* server);
RETARGET_API void retarget_server_wait(retarget_server* server);
RETARGET_API void retarget_server_stop(retarget_server* server);
RETARGET_API void retarget_server_free(retarget_server* server);

#ifdef __cplusplus
}
#endif

#endif /* RETARGET_RETARGET_H */
