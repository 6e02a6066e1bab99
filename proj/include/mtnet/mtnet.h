// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#ifndef MTNET_MTNET_H_
#define MTNET_MTNET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MTNET_API __declspec(dllexport)
#else
#define MTNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mtnet_status {
  MTNET_OK = 0,
  MTNET_ERR_INVALID_ARGUMENT = 1,
  MTNET_ERR_SHAPE = 2,
  MTNET_ERR_CONFIG = 3,
  MTNET_ERR_IO = 4,
  MTNET_ERR_CHECKPOINT = 5,
  MTNET_ERR_NUMERIC = 6,
  MTNET_ERR_UNTRACEABLE = 7,
  MTNET_ERR_INTERNAL = 8
} mtnet_status;

typedef struct mtnet_config mtnet_config;
typedef struct mtnet_model mtnet_model;

/* Called once per epoch with the epoch's log record as JSON. */
typedef void (*mtnet_epoch_callback)(const char* record_json, void* user);

MTNET_API const char* mtnet_version(void);
/* Message of the last failed call on this thread; "" after a success. */
MTNET_API const char* mtnet_last_error(void);
MTNET_API const char* mtnet_status_name(mtnet_status status);
/* Releases strings returned through char** out-parameters. */
MTNET_API void mtnet_free_string(char* s);

/* Configuration. `preset` may be NULL for the built-in defaults. */
MTNET_API mtnet_status mtnet_config_create(const char* preset, mtnet_config** out);
MTNET_API void mtnet_config_free(mtnet_config* config);
MTNET_API mtnet_status mtnet_config_load_file(mtnet_config* config, const char* path);
MTNET_API mtnet_status mtnet_config_set(mtnet_config* config, const char* key, const char* value);
MTNET_API mtnet_status mtnet_config_get(const mtnet_config* config, const char* key, char** value);
/* Full "key = value" listing. */
MTNET_API mtnet_status mtnet_config_dump(const mtnet_config* config, char** text);
/* Keys with their help text, one per line. */
MTNET_API mtnet_status mtnet_config_keys(char** text);
MTNET_API mtnet_status mtnet_config_hash(const mtnet_config* config, char** hash);

/* Writes <out_dir>/train and <out_dir>/val from the synth.* settings. */
MTNET_API mtnet_status mtnet_gen_data(const mtnet_config* config, const char* out_dir);

/* Trains on folder datasets. `val_dir` may be NULL (the training set is
   then used for validation). Writes best.ckpt, last.ckpt and
   train_log.jsonl into out_dir. `summary_json` and `callback` may be NULL. */
MTNET_API mtnet_status mtnet_train(const mtnet_config* config, const char* train_dir,
                                   const char* val_dir, const char* out_dir,
                                   mtnet_epoch_callback callback, void* user,
                                   char** summary_json);

/* Freshly initialized model. */
MTNET_API mtnet_status mtnet_model_create(const mtnet_config* config, mtnet_model** out);
/* Loads a checkpoint. When `expected` is non-NULL its architecture must
   match the checkpoint's, otherwise MTNET_ERR_CHECKPOINT is returned. */
MTNET_API mtnet_status mtnet_model_load(const char* checkpoint, const mtnet_config* expected,
                                        mtnet_model** out);
MTNET_API void mtnet_model_free(mtnet_model* model);
MTNET_API mtnet_status mtnet_model_save(const mtnet_model* model, const char* path);
/* Settings, class names and checkpoint metadata as JSON. */
MTNET_API mtnet_status mtnet_model_info(const mtnet_model* model, char** json);
MTNET_API int64_t mtnet_model_num_seg_classes(const mtnet_model* model);
MTNET_API int64_t mtnet_model_num_scene_classes(const mtnet_model* model);

/* Forward pass on one planar RGB image ([3, H, W] floats in [0, 1]).
   `seg` receives H*W class indices, `scene_log_probs` K_scene values. */
MTNET_API mtnet_status mtnet_model_predict(const mtnet_model* model, const float* rgb,
                                           int64_t height, int64_t width, int32_t* seg,
                                           double* scene_log_probs);

/* Metrics of a model on a folder dataset, as JSON. */
MTNET_API mtnet_status mtnet_eval(const mtnet_model* model, const char* data_dir,
                                  char** report_json);
/* Metrics of stored predictions: <pred_dir>/seg/<id>.pgm label maps and
   <pred_dir>/scene_scores.txt lines "<id>,<score 0>,<score 1>,...". */
MTNET_API mtnet_status mtnet_eval_predictions(const char* data_dir, const char* pred_dir,
                                              char** report_json);

/* Renders overlay, CAM and result.json for one PPM image; `depth_pgm`
   (16-bit millimetres) may be NULL. */
MTNET_API mtnet_status mtnet_infer(const mtnet_model* model, const char* image_ppm,
                                   const char* depth_pgm, const char* out_dir, double threshold_m,
                                   double min_fraction, char** result_json);

/* Complexity report for `count` configs at height x width. fps_iters = 0
   skips timing. The text ends with a comparison table in input order. */
MTNET_API mtnet_status mtnet_profile(const mtnet_config* const* configs, const char* const* names,
                                     size_t count, int64_t height, int64_t width, int fps_iters,
                                     char** report);

/* Classes within threshold_m of the camera. Outputs are written up to
   `capacity` entries; *count receives the full number. */
MTNET_API mtnet_status mtnet_nearby_objects(const int32_t* seg, const double* depth,
                                            int64_t height, int64_t width, double threshold_m,
                                            double min_fraction, int32_t* classes,
                                            double* fractions, double* min_depths,
                                            size_t capacity, size_t* count);

#ifdef __cplusplus
}
#endif

#endif  // MTNET_MTNET_H_
