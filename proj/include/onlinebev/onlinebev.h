/* C interface to the onlinebev library: synthetic BEV data generation,
 * training, evaluation, ablation and heatmap export.
 *
 * Every function that can fail returns an obev_status. On failure the
 * message is available from obev_last_error() on the same thread until the
 * next failing call. Strings returned through char** are owned by the caller
 * and released with obev_string_free(). Handles are released with their
 * matching *_free function, which accepts NULL.
 */
#ifndef ONLINEBEV_H
#define ONLINEBEV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OBEV_API __declspec(dllexport)
#else
#define OBEV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum obev_status {
    OBEV_OK = 0,
    OBEV_ERR_INVALID_ARGUMENT = 1, /* NULL handle or pointer, bad split name */
    OBEV_ERR_DIMENSION = 2,
    OBEV_ERR_CONFIG = 3,
    OBEV_ERR_PARSE = 4,
    OBEV_ERR_IO = 5,
    OBEV_ERR_NUMERIC = 6,
    OBEV_ERR_SEQUENCE = 7,
    OBEV_ERR_GENERATION = 8,
    OBEV_ERR_OUT_OF_MEMORY = 9,
    OBEV_ERR_INTERNAL = 10
} obev_status;

typedef struct obev_config obev_config;
typedef struct obev_dataset obev_dataset;
typedef struct obev_model obev_model;

OBEV_API const char* obev_version(void);
OBEV_API const char* obev_status_name(obev_status status);
/* Message of the last failure on this thread, "" if none. */
OBEV_API const char* obev_last_error(void);
OBEV_API void obev_string_free(char* s);

/* Run configuration (JSON). Missing keys take defaults, unknown keys fail. */
OBEV_API obev_status obev_config_default(obev_config** out);
OBEV_API obev_status obev_config_load(const char* path, obev_config** out);
OBEV_API obev_status obev_config_parse(const char* json_text, obev_config** out);
/* Training seed; also replaces the ablation seed list with this one seed. */
OBEV_API obev_status obev_config_set_seed(obev_config* cfg, uint64_t seed);
/* Base seed of the generated scenes. */
OBEV_API obev_status obev_config_set_data_seed(obev_config* cfg, uint64_t seed);
OBEV_API obev_status obev_config_to_json(const obev_config* cfg, char** out_json);
OBEV_API void obev_config_free(obev_config* cfg);

/* Writes train.obds, val.obds and config.json into out_dir (created if needed). */
OBEV_API obev_status obev_generate(const obev_config* cfg, const char* out_dir);

/* split is "train" or "val"; reads <dir>/<split>.obds. */
OBEV_API obev_status obev_dataset_load(const char* dir, const char* split, obev_dataset** out);
OBEV_API obev_status obev_dataset_read_file(const char* path, obev_dataset** out);
OBEV_API obev_status obev_dataset_counts(const obev_dataset* data, size_t* scenes, size_t* frames);
OBEV_API void obev_dataset_free(obev_dataset* data);

/* Trains cfg's model on data with cfg's seed. metrics_csv (optional) receives
 * the per-epoch loss table. */
OBEV_API obev_status obev_train(const obev_config* cfg, const obev_dataset* data, obev_model** out, char** metrics_csv);
OBEV_API obev_status obev_model_save(const obev_model* model, const char* path);
OBEV_API obev_status obev_model_load(const char* path, obev_model** out);
OBEV_API obev_status obev_model_parameter_count(const obev_model* model, size_t* out);
OBEV_API void obev_model_free(obev_model* model);

/* Metrics on the clean data and on each corruption listed in the training
 * configuration, one CSV row per condition. */
OBEV_API obev_status obev_evaluate(const obev_model* model, const obev_dataset* data, char** report_csv);

/* One PGM per (scene, frame, class): <scene>_<frame>_<class>.pgm. */
OBEV_API obev_status obev_dump_heatmaps(const obev_model* model, const obev_dataset* data, const char* out_dir,
                                        size_t* files_written);

/* Trains and evaluates every configured arm for every seed; one CSV row per
 * (arm, seed). */
OBEV_API obev_status obev_ablate(const obev_config* cfg, char** csv);

#ifdef __cplusplus
}
#endif

#endif
