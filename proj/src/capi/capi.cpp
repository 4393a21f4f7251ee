#include <cstring>
#include <sstream>
#include <string>

#include "satm/app.hpp"
#include "satm/satm.h"

struct satm_config {
  satm::app::RunConfig config;
};

struct satm_model {
  satm::app::LoadedModel loaded;
};

namespace {

thread_local std::string last_error;

char* copy_out(const std::string& s) {
  char* p = new char[s.size() + 1];
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

satm_status fail(satm_status code, const std::string& message) {
  last_error = message;
  return code;
}

// Runs f, translating exceptions into status codes at the boundary.
template <class F>
satm_status guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return SATM_OK;
  } catch (const std::invalid_argument& e) {
    return fail(SATM_ERR_VALIDATION, e.what());
  } catch (const std::exception& e) {
    return fail(SATM_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(SATM_ERR_RUNTIME, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (!p) throw std::invalid_argument(std::string(what) + " must not be null");
}

}  // namespace

extern "C" {

const char* satm_version(void) { return "1.0.0"; }

const char* satm_last_error(void) { return last_error.c_str(); }

void satm_string_free(char* s) { delete[] s; }

satm_status satm_config_new(satm_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new satm_config{};
  });
}

satm_status satm_config_load(const char* path, satm_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new satm_config{satm::app::RunConfig::load(path)};
  });
}

satm_status satm_config_set(satm_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->config.set(key, value);
  });
}

satm_status satm_config_get(const satm_config* config, const char* key, char** out) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(out, "out");
    *out = config->config.has(key) ? copy_out(config->config.get(key)) : nullptr;
  });
}

void satm_config_free(satm_config* config) { delete config; }

satm_status satm_run_command(const char* command, const satm_config* config, char** log) {
  satm_status status = guarded([&] {
    need(command, "command");
    need(config, "config");
  });
  if (status != SATM_OK) return status;
  std::ostringstream text;
  std::string error;
  const int code = satm::app::run_command(command, config->config, text, &error);
  if (log) *log = copy_out(text.str());
  if (code == 0) {
    last_error.clear();
    return SATM_OK;
  }
  return fail(code == 1 ? SATM_ERR_VALIDATION : SATM_ERR_RUNTIME, error);
}

satm_status satm_model_load(const char* checkpoint_path, satm_model** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    *out = nullptr;
    auto m = std::make_unique<satm_model>();
    m->loaded = satm::app::restore_model(satm::app::load_checkpoint(checkpoint_path));
    *out = m.release();
  });
}

satm_status satm_model_summarize(satm_model* model, const char* dialogue_json, char** summary) {
  return guarded([&] {
    need(model, "model");
    need(dialogue_json, "dialogue_json");
    need(summary, "summary");
    *summary = nullptr;
    const auto mode = model->loaded.token_mode;
    std::istringstream in(dialogue_json);
    std::vector<satm::corpus::Dialogue> dialogues;
    try {
      dialogues = satm::corpus::parse_corpus(in, mode);
    } catch (const satm::corpus::CorpusError& e) {
      throw std::invalid_argument(e.what());
    }
    if (dialogues.size() != 1)
      throw std::invalid_argument("expected exactly one dialogue, got " +
                                  std::to_string(dialogues.size()));
    const auto out = satm::train::summarize(*model->loaded.model, dialogues.front(), {});
    *summary = copy_out(satm::corpus::detokenize(out.summary, mode));
  });
}

void satm_model_free(satm_model* model) { delete model; }

}  // extern "C"
