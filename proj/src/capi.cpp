#include "gvf_lane.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "config.hpp"
#include "harness.hpp"

struct gvfl_config {
  gvfl::RunConfig impl;
};

namespace {

thread_local std::string g_last_error;

gvfl_status fail(gvfl_status code, const char* what) {
  g_last_error = what ? what : "unknown error";
  return code;
}

template <class F>
gvfl_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return GVFL_OK;
  } catch (const std::invalid_argument& e) {
    return fail(GVFL_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(GVFL_INVALID_ARGUMENT, e.what());
  } catch (const std::domain_error& e) {
    return fail(GVFL_NUMERIC_ERROR, e.what());
  } catch (const std::logic_error& e) {
    return fail(GVFL_STATE_ERROR, e.what());
  } catch (const std::exception& e) {
    return fail(GVFL_IO_ERROR, e.what());
  } catch (...) {
    return fail(GVFL_IO_ERROR, "unknown error");
  }
}

std::optional<std::filesystem::path> opt_path(const char* p) {
  if (!p) return std::nullopt;
  return std::filesystem::path(p);
}

}  // namespace

extern "C" {

const char* gvfl_version(void) { return "1.0.0"; }

const char* gvfl_last_error(void) { return g_last_error.c_str(); }

gvfl_config* gvfl_config_create(void) {
  try {
    return new gvfl_config();
  } catch (...) {
    return nullptr;
  }
}

void gvfl_config_destroy(gvfl_config* cfg) { delete cfg; }

gvfl_status gvfl_config_set(gvfl_config* cfg, const char* key,
                            const char* value) {
  if (!cfg || !key || !value)
    return fail(GVFL_INVALID_ARGUMENT, "config_set: null argument");
  return guarded([&] { cfg->impl.set(key, value); });
}

gvfl_status gvfl_config_load(gvfl_config* cfg, const char* path) {
  if (!cfg || !path)
    return fail(GVFL_INVALID_ARGUMENT, "config_load: null argument");
  return guarded([&] { cfg->impl.load_file(path); });
}

gvfl_status gvfl_config_get(const gvfl_config* cfg, const char* key, char* buf,
                            size_t cap, size_t* out_len) {
  if (!cfg || !key)
    return fail(GVFL_INVALID_ARGUMENT, "config_get: null argument");
  return guarded([&] {
    const std::string& v = cfg->impl.get_str(key);
    if (out_len) *out_len = v.size();
    if (buf && cap > 0) {
      if (v.size() + 1 > cap)
        throw std::invalid_argument("config_get: buffer too small for " +
                                    std::string(key));
      std::memcpy(buf, v.c_str(), v.size() + 1);
    } else if (!buf && !out_len) {
      throw std::invalid_argument("config_get: nowhere to put the value");
    }
  });
}

gvfl_status gvfl_collect(const gvfl_config* cfg, const char* out_dir) {
  if (!cfg || !out_dir)
    return fail(GVFL_INVALID_ARGUMENT, "collect: null argument");
  return guarded([&] { gvfl::cmd_collect(cfg->impl, out_dir); });
}

gvfl_status gvfl_train_gvf(const gvfl_config* cfg, const char* data_dir,
                           const char* out_dir) {
  if (!cfg || !data_dir || !out_dir)
    return fail(GVFL_INVALID_ARGUMENT, "train_gvf: null argument");
  return guarded([&] { gvfl::cmd_train_gvf(cfg->impl, data_dir, out_dir); });
}

gvfl_status gvfl_train_agent(const gvfl_config* cfg, const char* data_dir,
                             const char* out_dir) {
  if (!cfg || !out_dir)
    return fail(GVFL_INVALID_ARGUMENT, "train_agent: null argument");
  return guarded(
      [&] { gvfl::cmd_train_agent(cfg->impl, opt_path(data_dir), out_dir); });
}

gvfl_status gvfl_evaluate(const gvfl_config* cfg, const char* model_dir,
                          const char* out_dir) {
  if (!cfg || !out_dir)
    return fail(GVFL_INVALID_ARGUMENT, "evaluate: null argument");
  return guarded(
      [&] { gvfl::cmd_evaluate(cfg->impl, opt_path(model_dir), out_dir); });
}

gvfl_status gvfl_report(const char* const* run_dirs, size_t n_dirs,
                        const char* out_file) {
  if (!run_dirs || !out_file || n_dirs == 0)
    return fail(GVFL_INVALID_ARGUMENT, "report: null or empty argument");
  return guarded([&] {
    std::vector<std::filesystem::path> dirs;
    dirs.reserve(n_dirs);
    for (size_t i = 0; i < n_dirs; ++i) {
      if (!run_dirs[i]) throw std::invalid_argument("report: null run dir");
      dirs.emplace_back(run_dirs[i]);
    }
    gvfl::cmd_report(dirs, out_file);
  });
}

gvfl_status gvfl_inspect(const char* path, char** out_text) {
  if (!path || !out_text)
    return fail(GVFL_INVALID_ARGUMENT, "inspect: null argument");
  *out_text = nullptr;
  return guarded([&] {
    std::string text = gvfl::cmd_inspect(path);
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out_text = buf;
  });
}

void gvfl_string_free(char* s) { std::free(s); }

}  // extern "C"
