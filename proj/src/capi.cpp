// SPDX-License-Identifier: Apache-2.0
#include "mor.h"

#include <cstring>
#include <new>
#include <string>

#include "mor/config.hpp"
#include "mor/errors.hpp"
#include "mor/pipeline.hpp"

#if defined(__GNUC__)
#define MOR_EXPORT __attribute__((visibility("default")))
#else
#define MOR_EXPORT
#endif

struct mor_config {
  mor::RunConfig cfg;
  std::string describe_buf;
};

namespace {

thread_local std::string g_last_error;

int classify(const std::exception& e) {
  if (dynamic_cast<const mor::ConfigError*>(&e)) return MOR_ERR_CONFIG;
  if (dynamic_cast<const mor::ContractError*>(&e)) return MOR_ERR_CONFIG;
  if (dynamic_cast<const mor::NumericalError*>(&e)) return MOR_ERR_NUMERIC;
  if (dynamic_cast<const mor::ArtifactError*>(&e)) return MOR_ERR_ARTIFACT;
  return MOR_ERR_INTERNAL;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return classify(e);
  } catch (...) {
    g_last_error = "unknown error";
    return MOR_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

MOR_EXPORT int mor_config_load(const char* path, mor_config** out) {
  if (out == nullptr) return MOR_ERR_CONFIG;
  *out = nullptr;
  return guarded([&] {
    if (path == nullptr) throw mor::ConfigError("mor_config_load: path is NULL");
    auto* h = new mor_config{mor::parse_config(path), {}};
    *out = h;
    return MOR_OK;
  });
}

MOR_EXPORT int mor_config_from_text(const char* text, mor_config** out) {
  if (out == nullptr) return MOR_ERR_CONFIG;
  *out = nullptr;
  return guarded([&] {
    if (text == nullptr) throw mor::ConfigError("mor_config_from_text: text is NULL");
    auto* h = new mor_config{mor::parse_config_text(text), {}};
    *out = h;
    return MOR_OK;
  });
}

MOR_EXPORT void mor_config_free(mor_config* cfg) { delete cfg; }

MOR_EXPORT int mor_config_set(mor_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    if (cfg == nullptr || key == nullptr || value == nullptr)
      throw mor::ConfigError("mor_config_set: NULL argument");
    mor::apply_override(cfg->cfg, key, value);
    return MOR_OK;
  });
}

MOR_EXPORT const char* mor_config_describe(mor_config* cfg) {
  if (cfg == nullptr) return "";
  cfg->describe_buf = mor::serialize_config(cfg->cfg);
  return cfg->describe_buf.c_str();
}

MOR_EXPORT int mor_run_stage(mor_config* cfg, const char* stage) {
  return guarded([&] {
    if (cfg == nullptr || stage == nullptr)
      throw mor::ConfigError("mor_run_stage: NULL argument");
    return mor::dispatch(stage, cfg->cfg);
  });
}

MOR_EXPORT const char* mor_stage_names(void) {
  static const std::string names = [] {
    std::string s;
    for (const auto& st : mor::pipeline_stages()) {
      if (!s.empty()) s += "\n";
      s += st;
    }
    return s;
  }();
  return names.c_str();
}

MOR_EXPORT const char* mor_last_error(void) { return g_last_error.c_str(); }

MOR_EXPORT const char* mor_version(void) { return "1.0.0"; }

}  // extern "C"
