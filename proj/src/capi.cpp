#include "misodice.h"

#include <exception>
#include <string>
#include <vector>

#include "config.hpp"
#include "pipeline.hpp"
#include "serial.hpp"
#include "verify.hpp"

struct miso_run {
  miso::config::RunConfig cfg;
  std::string last_error;
  std::string last_output;
};

namespace {

thread_local std::string g_create_error;

int classify(const std::exception& e) {
  if (dynamic_cast<const miso::config::ConfigError*>(&e)) return MISO_ERR_CONFIG;
  if (dynamic_cast<const miso::IoError*>(&e)) return MISO_ERR_IO;
  if (dynamic_cast<const miso::FormatError*>(&e)) return MISO_ERR_IO;
  const std::string m = e.what();
  if (m.find("diverged") != std::string::npos ||
      m.find("non-finite") != std::string::npos)
    return MISO_ERR_DIVERGENCE;
  return MISO_ERR_INTERNAL;
}

template <typename F>
int guards(miso_run* run, F&& f) {
  if (!run) return MISO_ERR_INVALID;
  run->last_error.clear();
  try {
    return f();
  } catch (const std::exception& e) {
    run->last_error = e.what();
    return classify(e);
  } catch (...) {
    run->last_error = "unknown error";
    return MISO_ERR_INTERNAL;
  }
}

miso_run* create_common(const char* text, bool is_path) {
  g_create_error.clear();
  if (!text) {
    g_create_error = "null argument";
    return nullptr;
  }
  try {
    auto run = new miso_run();
    try {
      run->cfg = is_path ? miso::config::load_config(text)
                         : miso::config::parse_config(text);
      miso::config::apply_env_overrides(run->cfg);
    } catch (...) {
      delete run;
      throw;
    }
    return run;
  } catch (const std::exception& e) {
    g_create_error = e.what();
    return nullptr;
  }
}

}  // namespace

extern "C" {

miso_run* miso_run_create(const char* config_path) {
  return create_common(config_path, true);
}

miso_run* miso_run_create_from_string(const char* config_json) {
  return create_common(config_json, false);
}

void miso_run_destroy(miso_run* run) { delete run; }

const char* miso_last_error(const miso_run* run) {
  return run ? run->last_error.c_str() : g_create_error.c_str();
}

const char* miso_last_output(const miso_run* run) {
  static const char* empty = "";
  return run ? run->last_output.c_str() : empty;
}

int miso_set_override(miso_run* run, const char* key, const char* value) {
  return guards(run, [&]() {
    if (!key || !value) {
      run->last_error = "null argument";
      return int(MISO_ERR_INVALID);
    }
    miso::config::set_override(run->cfg, key, value);
    return int(MISO_OK);
  });
}

int miso_gen_data(miso_run* run, const char* out_dir) {
  return guards(run, [&]() {
    if (!out_dir) {
      run->last_error = "null argument";
      return int(MISO_ERR_INVALID);
    }
    run->last_output = miso::pipeline::run_gen_data(run->cfg, out_dir);
    return int(MISO_OK);
  });
}

int miso_label(miso_run* run, const char* dataset_path, const char* out_dir) {
  return guards(run, [&]() {
    if (!dataset_path || !out_dir) {
      run->last_error = "null argument";
      return int(MISO_ERR_INVALID);
    }
    run->last_output = miso::pipeline::run_label(run->cfg, dataset_path, out_dir);
    return int(MISO_OK);
  });
}

int miso_train(miso_run* run, const char* dataset_path,
               const char* manifest_path, const char* out_dir) {
  return guards(run, [&]() {
    if (!dataset_path || !manifest_path || !out_dir) {
      run->last_error = "null argument";
      return int(MISO_ERR_INVALID);
    }
    run->last_output =
        miso::pipeline::run_train(run->cfg, dataset_path, manifest_path, out_dir);
    return int(MISO_OK);
  });
}

int miso_eval(miso_run* run, const char* checkpoint_path) {
  return guards(run, [&]() {
    if (!checkpoint_path) {
      run->last_error = "null argument";
      return int(MISO_ERR_INVALID);
    }
    run->last_output = miso::pipeline::run_eval(run->cfg, checkpoint_path);
    return int(MISO_OK);
  });
}

int miso_verify(miso_run* run) {
  return guards(run, [&]() {
    miso::config::validate(run->cfg);
    const auto results = miso::verify::run_all(run->cfg.seed);
    run->last_output = miso::verify::render(results);
    return miso::verify::all_pass(results) ? int(MISO_OK)
                                           : int(MISO_ERR_VERIFY);
  });
}

int miso_plot(miso_run* run, const char* const* metrics_csvs, int n,
              const char* out_path) {
  return guards(run, [&]() {
    if (!metrics_csvs || n < 1 || !out_path) {
      run->last_error = "null or empty argument";
      return int(MISO_ERR_INVALID);
    }
    std::vector<std::string> paths;
    for (int i = 0; i < n; ++i) {
      if (!metrics_csvs[i]) {
        run->last_error = "null path in list";
        return int(MISO_ERR_INVALID);
      }
      paths.emplace_back(metrics_csvs[i]);
    }
    run->last_output = miso::pipeline::run_plot(paths, out_path);
    return int(MISO_OK);
  });
}

const char* miso_version(void) { return "0.1.0"; }

}  // extern "C"
