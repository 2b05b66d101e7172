#ifndef DTLAB_DTLAB_H
#define DTLAB_DTLAB_H

/* C interface to the defense-transformer lab. All handles are opaque; every
 * fallible call returns a dtlab_status and leaves details in a thread-local
 * message readable through dtlab_last_error(). Strings handed out by a handle
 * stay valid until that handle is freed or modified. */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(DTLAB_BUILDING)
#    define DTLAB_API __declspec(dllexport)
#  else
#    define DTLAB_API __declspec(dllimport)
#  endif
#else
#  define DTLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dtlab_status {
    DTLAB_OK = 0,
    DTLAB_ERR_DIMENSION = 1,
    DTLAB_ERR_DOMAIN = 2,
    DTLAB_ERR_CONTRACT = 3,
    DTLAB_ERR_INDEX = 4,
    DTLAB_ERR_FORMAT = 5,
    DTLAB_ERR_CONFIG = 6,
    DTLAB_ERR_IO = 7,
    DTLAB_ERR_NULL_ARGUMENT = 8,
    DTLAB_ERR_INTERNAL = 9
} dtlab_status;

typedef struct dtlab_config dtlab_config;
typedef struct dtlab_report dtlab_report;
typedef struct dtlab_checkpoint dtlab_checkpoint;
typedef struct dtlab_classifier dtlab_classifier;
typedef struct dtlab_defense dtlab_defense;

DTLAB_API const char* dtlab_version(void);
DTLAB_API const char* dtlab_status_name(dtlab_status status);
/* Message of the most recent failure on this thread, "" if none. */
DTLAB_API const char* dtlab_last_error(void);

/* Configuration. Overrides use dotted paths, e.g. "train.epochs=3" or
 * "attacks.0.epsilon=0.1"; the value is read as JSON, else as a string. */
DTLAB_API dtlab_status dtlab_config_parse(const char* json_text, dtlab_config** out);
DTLAB_API dtlab_status dtlab_config_load(const char* path, dtlab_config** out);
DTLAB_API dtlab_status dtlab_config_set(dtlab_config* cfg, const char* assignment);
DTLAB_API dtlab_status dtlab_config_hash(const dtlab_config* cfg, const char** out);
/* The fully defaulted document, pretty-printed. */
DTLAB_API dtlab_status dtlab_config_json(const dtlab_config* cfg, const char** out);
DTLAB_API dtlab_status dtlab_config_experiment(const dtlab_config* cfg, const char** out);
DTLAB_API void dtlab_config_free(dtlab_config* cfg);

/* Runs the configured experiment; artifacts land in output.dir. */
DTLAB_API dtlab_status dtlab_run(const dtlab_config* cfg, dtlab_report** out);
DTLAB_API dtlab_status dtlab_report_load(const char* path, dtlab_report** out);
DTLAB_API dtlab_status dtlab_report_json(const dtlab_report* report, const char** out);
/* Empty for loaded reports. */
DTLAB_API dtlab_status dtlab_report_csv(const dtlab_report* report, const char** out);
DTLAB_API dtlab_status dtlab_report_summary(const dtlab_report* report, const char** out);
/* Numeric field addressed by a JSON pointer such as "/accuracy/natural/clean". */
DTLAB_API dtlab_status dtlab_report_number(const dtlab_report* report, const char* pointer, double* out);
DTLAB_API void dtlab_report_free(dtlab_report* report);

/* Checkpoint containers (CWARP001). */
DTLAB_API dtlab_status dtlab_checkpoint_create(const char* metadata, dtlab_checkpoint** out);
DTLAB_API dtlab_status dtlab_checkpoint_load(const char* path, dtlab_checkpoint** out);
DTLAB_API dtlab_status dtlab_checkpoint_save(const dtlab_checkpoint* ckpt, const char* path);
DTLAB_API dtlab_status dtlab_checkpoint_add(dtlab_checkpoint* ckpt, const char* name, const size_t* shape, size_t ndim,
                                            const double* data);
DTLAB_API dtlab_status dtlab_checkpoint_count(const dtlab_checkpoint* ckpt, size_t* out);
DTLAB_API dtlab_status dtlab_checkpoint_entry(const dtlab_checkpoint* ckpt, size_t index, const char** name,
                                              const size_t** shape, size_t* ndim, const double** data,
                                              size_t* numel);
DTLAB_API dtlab_status dtlab_checkpoint_metadata(const dtlab_checkpoint* ckpt, const char** out);
DTLAB_API void dtlab_checkpoint_free(dtlab_checkpoint* ckpt);

/* Inference on saved models. Inputs are flat row-major samples of the
 * model's input shape. */
DTLAB_API dtlab_status dtlab_classifier_load(const char* path, dtlab_classifier** out);
DTLAB_API dtlab_status dtlab_classifier_input_size(const dtlab_classifier* h, size_t* out);
DTLAB_API dtlab_status dtlab_classifier_predict(const dtlab_classifier* h, const double* x, size_t n, int* label);
DTLAB_API void dtlab_classifier_free(dtlab_classifier* h);

DTLAB_API dtlab_status dtlab_defense_load(const char* path, dtlab_defense** out);
DTLAB_API dtlab_status dtlab_defense_apply(const dtlab_defense* d, const double* x, size_t n, double* out);
DTLAB_API void dtlab_defense_free(dtlab_defense* d);

#ifdef __cplusplus
}
#endif

#endif
