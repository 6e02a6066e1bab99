// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "mtnet/mtnet.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <functional>
#include <memory>
#include <new>
#include <string>

#include "app.hpp"
#include "error.hpp"
#include "inference.hpp"

struct mtnet_config {
  mtnet::Settings settings;
};

struct mtnet_model {
  mtnet::LoadedModel loaded;
};

namespace {

thread_local std::string g_last_error;

mtnet_status to_status(mtnet::ErrorCode code) {
  switch (code) {
    case mtnet::ErrorCode::InvalidArgument: return MTNET_ERR_INVALID_ARGUMENT;
    case mtnet::ErrorCode::Shape: return MTNET_ERR_SHAPE;
    case mtnet::ErrorCode::Config: return MTNET_ERR_CONFIG;
    case mtnet::ErrorCode::Io: return MTNET_ERR_IO;
    case mtnet::ErrorCode::Checkpoint: return MTNET_ERR_CHECKPOINT;
    case mtnet::ErrorCode::Numeric: return MTNET_ERR_NUMERIC;
    case mtnet::ErrorCode::Untraceable: return MTNET_ERR_UNTRACEABLE;
    case mtnet::ErrorCode::Internal: return MTNET_ERR_INTERNAL;
  }
  return MTNET_ERR_INTERNAL;
}

template <typename F>
mtnet_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return MTNET_OK;
  } catch (const mtnet::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MTNET_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MTNET_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) mtnet::fail(mtnet::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_out(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

}  // namespace

extern "C" {

const char* mtnet_version(void) { return "0.1.0"; }

const char* mtnet_last_error(void) { return g_last_error.c_str(); }

const char* mtnet_status_name(mtnet_status status) {
  switch (status) {
    case MTNET_OK: return "ok";
    case MTNET_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MTNET_ERR_SHAPE: return "shape error";
    case MTNET_ERR_CONFIG: return "config error";
    case MTNET_ERR_IO: return "i/o error";
    case MTNET_ERR_CHECKPOINT: return "checkpoint error";
    case MTNET_ERR_NUMERIC: return "numeric error";
    case MTNET_ERR_UNTRACEABLE: return "untraceable op";
    case MTNET_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void mtnet_free_string(char* s) { std::free(s); }

mtnet_status mtnet_config_create(const char* preset, mtnet_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<mtnet_config>();
    if (preset) c->settings = mtnet::preset(preset);
    *out = c.release();
  });
}

void mtnet_config_free(mtnet_config* config) { delete config; }

mtnet_status mtnet_config_load_file(mtnet_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    mtnet::apply_settings_file(config->settings, path);
  });
}

mtnet_status mtnet_config_set(mtnet_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    mtnet::apply_setting(config->settings, key, value);
  });
}

mtnet_status mtnet_config_get(const mtnet_config* config, const char* key, char** value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    *value = dup_string(mtnet::get_setting(config->settings, key));
  });
}

mtnet_status mtnet_config_dump(const mtnet_config* config, char** text) {
  return guarded([&] {
    require(config, "config");
    require(text, "text");
    *text = dup_string(mtnet::format_settings(config->settings));
  });
}

mtnet_status mtnet_config_keys(char** text) {
  return guarded([&] {
    require(text, "text");
    std::string out;
    for (const auto& k : mtnet::setting_keys()) out += k.key + "\t" + k.help + "\n";
    *text = dup_string(out);
  });
}

mtnet_status mtnet_config_hash(const mtnet_config* config, char** hash) {
  return guarded([&] {
    require(config, "config");
    require(hash, "hash");
    *hash = dup_string(mtnet::architecture_hash(config->settings));
  });
}

mtnet_status mtnet_gen_data(const mtnet_config* config, const char* out_dir) {
  return guarded([&] {
    require(config, "config");
    require(out_dir, "out_dir");
    mtnet::generate_synthetic(mtnet::resolved_synth(config->settings), out_dir);
  });
}

mtnet_status mtnet_train(const mtnet_config* config, const char* train_dir, const char* val_dir,
                         const char* out_dir, mtnet_epoch_callback callback, void* user,
                         char** summary_json) {
  return guarded([&] {
    require(config, "config");
    require(train_dir, "train_dir");
    require(out_dir, "out_dir");
    std::function<void(const mtnet::EpochRecord&)> on_epoch;
    if (callback) {
      on_epoch = [&](const mtnet::EpochRecord& r) { callback(r.to_json().dump().c_str(), user); };
    }
    const auto summary =
        mtnet::train_folder(config->settings, train_dir, val_dir ? val_dir : "", out_dir, on_epoch);
    set_out(summary_json, summary.to_json().dump());
  });
}

mtnet_status mtnet_model_create(const mtnet_config* config, mtnet_model** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<mtnet_model>();
    m->loaded = mtnet::create_model(config->settings);
    *out = m.release();
  });
}

mtnet_status mtnet_model_load(const char* checkpoint, const mtnet_config* expected, mtnet_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<mtnet_model>();
    m->loaded = mtnet::load_model(checkpoint, expected ? &expected->settings : nullptr);
    *out = m.release();
  });
}

void mtnet_model_free(mtnet_model* model) { delete model; }

mtnet_status mtnet_model_save(const mtnet_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    mtnet::save_checkpoint(path, *model->loaded.model, model->loaded.info);
  });
}

mtnet_status mtnet_model_info(const mtnet_model* model, char** json) {
  return guarded([&] {
    require(model, "model");
    require(json, "json");
    const auto& l = model->loaded;
    nlohmann::json j;
    j["config"] = mtnet::format_settings(l.settings);
    j["config_hash"] = mtnet::architecture_hash(l.settings);
    j["epoch"] = l.info.epoch;
    j["miou"] = l.info.miou;
    j["mca"] = l.info.mca;
    j["seg_class_names"] = l.info.seg_class_names;
    j["scene_class_names"] = l.info.scene_class_names;
    j["params"] = l.model->store().parameter_count();
    *json = dup_string(j.dump());
  });
}

int64_t mtnet_model_num_seg_classes(const mtnet_model* model) {
  return model ? model->loaded.settings.model.seg.num_classes : -1;
}

int64_t mtnet_model_num_scene_classes(const mtnet_model* model) {
  return model ? model->loaded.settings.model.recog.num_classes : -1;
}

mtnet_status mtnet_model_predict(const mtnet_model* model, const float* rgb, int64_t height,
                                 int64_t width, int32_t* seg, double* scene_log_probs) {
  return guarded([&] {
    require(model, "model");
    require(rgb, "rgb");
    if (height < 1 || width < 1) mtnet::fail(mtnet::ErrorCode::InvalidArgument, "image size must be positive");
    const std::vector<float> img(rgb, rgb + 3 * height * width);
    const auto p = mtnet::predict(*model->loaded.model, img, height, width);
    if (seg) std::copy(p.seg.begin(), p.seg.end(), seg);
    if (scene_log_probs) std::copy(p.scene_log_probs.begin(), p.scene_log_probs.end(), scene_log_probs);
  });
}

mtnet_status mtnet_eval(const mtnet_model* model, const char* data_dir, char** report_json) {
  return guarded([&] {
    require(model, "model");
    require(data_dir, "data_dir");
    auto j = mtnet::evaluate_folder(model->loaded, data_dir).metrics.to_json();
    set_out(report_json, j.dump());
  });
}

mtnet_status mtnet_eval_predictions(const char* data_dir, const char* pred_dir, char** report_json) {
  return guarded([&] {
    require(data_dir, "data_dir");
    require(pred_dir, "pred_dir");
    set_out(report_json, mtnet::evaluate_predictions(data_dir, pred_dir).metrics.to_json().dump());
  });
}

mtnet_status mtnet_infer(const mtnet_model* model, const char* image_ppm, const char* depth_pgm,
                         const char* out_dir, double threshold_m, double min_fraction,
                         char** result_json) {
  return guarded([&] {
    require(model, "model");
    require(image_ppm, "image_ppm");
    require(out_dir, "out_dir");
    mtnet::InferOptions o;
    o.image_path = image_ppm;
    if (depth_pgm) o.depth_path = depth_pgm;
    o.out_dir = out_dir;
    o.threshold_m = threshold_m;
    o.min_fraction = min_fraction;
    o.seg_class_names = model->loaded.info.seg_class_names;
    o.scene_class_names = model->loaded.info.scene_class_names;
    set_out(result_json, mtnet::run_inference(*model->loaded.model, o).dump(2));
  });
}

mtnet_status mtnet_profile(const mtnet_config* const* configs, const char* const* names, size_t count,
                           int64_t height, int64_t width, int fps_iters, char** report) {
  return guarded([&] {
    require(configs, "configs");
    require(report, "report");
    std::vector<std::pair<std::string, mtnet::Settings>> list;
    for (size_t i = 0; i < count; ++i) {
      require(configs[i], "configs[i]");
      const std::string name = names && names[i] ? names[i] : "config" + std::to_string(i);
      list.emplace_back(name, configs[i]->settings);
    }
    *report = dup_string(mtnet::profile_report(list, height, width, fps_iters));
  });
}

mtnet_status mtnet_nearby_objects(const int32_t* seg, const double* depth, int64_t height,
                                  int64_t width, double threshold_m, double min_fraction,
                                  int32_t* classes, double* fractions, double* min_depths,
                                  size_t capacity, size_t* count) {
  return guarded([&] {
    require(seg, "seg");
    require(depth, "depth");
    require(count, "count");
    if (height < 0 || width < 0) mtnet::fail(mtnet::ErrorCode::InvalidArgument, "negative image size");
    const auto n = static_cast<size_t>(height * width);
    const auto list = mtnet::nearby_objects({seg, n}, {depth, n}, height, width, threshold_m, min_fraction);
    *count = list.size();
    for (size_t i = 0; i < list.size() && i < capacity; ++i) {
      if (classes) classes[i] = list[i].cls;
      if (fractions) fractions[i] = list[i].fraction;
      if (min_depths) min_depths[i] = list[i].min_depth;
    }
  });
}

}  // extern "C"
