#include "endreg/endreg.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <new>
#include <string>

#include "endreg/commands.hpp"
#include "endreg/config.hpp"
#include "endreg/data.hpp"
#include "endreg/end_core.hpp"
#include "endreg/errors.hpp"
#include "endreg/net.hpp"
#include "endreg/trainer.hpp"

struct endreg_config {
  std::map<std::string, std::string> values;
  endreg::RunConfig cfg;
};

struct endreg_dataset {
  endreg::BiasedDataset ds;
};

struct endreg_model {
  endreg::Network<float> net;
};

namespace {

thread_local std::string g_last_error;

int fail(int status, const std::string& what) {
  g_last_error = what;
  return status;
}

template <typename F>
int guard(F&& body) {
  try {
    const int status = body();
    if (status == ENDREG_OK) g_last_error.clear();
    return status;
  } catch (const endreg::ConfigError& e) {
    return fail(ENDREG_ERR_CONFIG, e.what());
  } catch (const endreg::IoError& e) {
    return fail(ENDREG_ERR_IO, e.what());
  } catch (const endreg::FormatError& e) {
    return fail(ENDREG_ERR_FORMAT, e.what());
  } catch (const endreg::SpecError& e) {
    return fail(ENDREG_ERR_SPEC, e.what());
  } catch (const endreg::SplitError& e) {
    return fail(ENDREG_ERR_SPLIT, e.what());
  } catch (const endreg::EvalError& e) {
    return fail(ENDREG_ERR_EVAL, e.what());
  } catch (const endreg::DimensionError& e) {
    return fail(ENDREG_ERR_DIMENSION, e.what());
  } catch (const endreg::PreconditionError& e) {
    return fail(ENDREG_ERR_PRECONDITION, e.what());
  } catch (const endreg::DegenerateFeatureError& e) {
    return fail(ENDREG_ERR_DEGENERATE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ENDREG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ENDREG_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(ENDREG_ERR_INTERNAL, "unknown error");
  }
}

int null_arg(const char* name) {
  return fail(ENDREG_ERR_INVALID_ARGUMENT, std::string(name) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void hand_out(char** dst, const std::string& s) {
  if (dst != nullptr) *dst = dup_string(s);
}

}  // namespace

extern "C" {

const char* endreg_version(void) { return "0.1.0"; }

const char* endreg_status_name(int status) {
  switch (status) {
    case ENDREG_OK: return "ok";
    case ENDREG_ERR_USAGE: return "usage";
    case ENDREG_ERR_CONFIG: return "config";
    case ENDREG_ERR_IO: return "io";
    case ENDREG_ERR_FORMAT: return "format";
    case ENDREG_ERR_SPEC: return "spec";
    case ENDREG_ERR_SPLIT: return "split";
    case ENDREG_ERR_EVAL: return "eval";
    case ENDREG_ERR_DIMENSION: return "dimension";
    case ENDREG_ERR_PRECONDITION: return "precondition";
    case ENDREG_ERR_DEGENERATE: return "degenerate_feature";
    case ENDREG_ERR_CHECK_FAILED: return "check_failed";
    case ENDREG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case ENDREG_ERR_INTERNAL: return "internal";
    default: return "unknown";
  }
}

const char* endreg_last_error(void) { return g_last_error.c_str(); }

void endreg_string_free(char* s) { std::free(s); }

int endreg_config_new(endreg_config** out) {
  if (out == nullptr) return null_arg("out");
  return guard([&] {
    auto c = std::make_unique<endreg_config>();
    c->cfg = endreg::parse_config_map({});
    *out = c.release();
    return ENDREG_OK;
  });
}

int endreg_config_load(const char* path, endreg_config** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guard([&] {
    auto c = std::make_unique<endreg_config>();
    // The raw values are kept so later sets re-validate the union.
    c->values = endreg::config_values_from_file(path);
    c->cfg = endreg::parse_config_map(c->values);
    *out = c.release();
    return ENDREG_OK;
  });
}

int endreg_config_set(endreg_config* cfg, const char* key, const char* value) {
  if (cfg == nullptr) return null_arg("cfg");
  if (key == nullptr) return null_arg("key");
  if (value == nullptr) return null_arg("value");
  return guard([&] {
    auto values = cfg->values;
    values[key] = value;
    cfg->cfg = endreg::parse_config_map(values);
    cfg->values = std::move(values);
    return ENDREG_OK;
  });
}

int endreg_config_set_many(endreg_config* cfg, const char* const* keys,
                           const char* const* values, size_t n) {
  if (cfg == nullptr) return null_arg("cfg");
  if (n != 0 && (keys == nullptr || values == nullptr)) return null_arg("keys");
  for (size_t i = 0; i < n; ++i)
    if (keys[i] == nullptr || values[i] == nullptr) return null_arg("keys");
  return guard([&] {
    auto merged = cfg->values;
    for (size_t i = 0; i < n; ++i) merged[keys[i]] = values[i];
    cfg->cfg = endreg::parse_config_map(merged);
    cfg->values = std::move(merged);
    return ENDREG_OK;
  });
}

int endreg_config_get(const endreg_config* cfg, const char* key, char** value) {
  if (cfg == nullptr) return null_arg("cfg");
  if (key == nullptr) return null_arg("key");
  if (value == nullptr) return null_arg("value");
  return guard([&] {
    const auto echo = endreg::config_echo(cfg->cfg);
    const auto it = echo.find(key);
    if (it == echo.end())
      throw endreg::ConfigError(key, std::string("unknown config key '") + key + "'");
    *value = dup_string(it->second);
    return ENDREG_OK;
  });
}

int endreg_config_schema(char** text) {
  if (text == nullptr) return null_arg("text");
  return guard([&] {
    std::string out;
    for (const auto& k : endreg::config_schema())
      out += std::string(k.name) + "\t" + k.type + "\t" + k.help + "\n";
    *text = dup_string(out);
    return ENDREG_OK;
  });
}

void endreg_config_free(endreg_config* cfg) { delete cfg; }

int endreg_dataset_generate(const endreg_config* cfg, int split,
                            endreg_dataset** out) {
  if (cfg == nullptr) return null_arg("cfg");
  if (out == nullptr) return null_arg("out");
  if (split < 0 || split > 3)
    return fail(ENDREG_ERR_INVALID_ARGUMENT, "split must be 0-3");
  return guard([&] {
    auto d = std::make_unique<endreg_dataset>();
    const auto s = static_cast<endreg::Split>(split);
    if (s == endreg::Split::train) {
      d->ds = endreg::generate(cfg->cfg.data, s);
    } else {
      const endreg::BiasedDataset train = endreg::generate(cfg->cfg.data);
      const auto mode = s == endreg::Split::biased_test ? endreg::SplitMode::biased_test
                                                         : endreg::SplitMode::unbiased_test;
      d->ds = endreg::build_eval_split(train, mode, cfg->cfg.eval_samples);
      if (s == endreg::Split::bias_conflicting) d->ds = endreg::bias_conflicting(d->ds);
    }
    *out = d.release();
    return ENDREG_OK;
  });
}

int endreg_dataset_read(const char* path, endreg_dataset** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guard([&] {
    auto d = std::make_unique<endreg_dataset>();
    d->ds = endreg::read_dataset(path);
    *out = d.release();
    return ENDREG_OK;
  });
}

int endreg_dataset_write(const endreg_dataset* ds, const char* path) {
  if (ds == nullptr) return null_arg("ds");
  if (path == nullptr) return null_arg("path");
  return guard([&] {
    endreg::write_dataset(ds->ds, path);
    return ENDREG_OK;
  });
}

int endreg_dataset_shape(const endreg_dataset* ds, size_t* samples, size_t* height,
                         size_t* width, size_t* channels, size_t* targets,
                         size_t* biases) {
  if (ds == nullptr) return null_arg("ds");
  if (samples) *samples = ds->ds.size();
  if (height) *height = ds->ds.shape.height;
  if (width) *width = ds->ds.shape.width;
  if (channels) *channels = ds->ds.shape.channels;
  if (targets) *targets = ds->ds.spec.n_targets;
  if (biases) *biases = ds->ds.spec.n_biases;
  g_last_error.clear();
  return ENDREG_OK;
}

int endreg_dataset_labels(const endreg_dataset* ds, uint16_t* targets,
                          uint16_t* biases) {
  if (ds == nullptr) return null_arg("ds");
  const auto& d = ds->ds;
  if (targets) std::copy(d.targets.begin(), d.targets.end(), targets);
  if (biases) std::copy(d.biases.begin(), d.biases.end(), biases);
  g_last_error.clear();
  return ENDREG_OK;
}

void endreg_dataset_free(endreg_dataset* ds) { delete ds; }

int endreg_model_load(const char* path, endreg_model** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guard([&] {
    auto m = std::make_unique<endreg_model>();
    m->net = endreg::load_checkpoint<float>(path);
    *out = m.release();
    return ENDREG_OK;
  });
}

int endreg_model_save(const endreg_model* model, const char* path) {
  if (model == nullptr) return null_arg("model");
  if (path == nullptr) return null_arg("path");
  return guard([&] {
    endreg::save_checkpoint(model->net, path);
    return ENDREG_OK;
  });
}

int endreg_model_parameter_count(const endreg_model* model, size_t* count) {
  if (model == nullptr) return null_arg("model");
  if (count == nullptr) return null_arg("count");
  *count = model->net.parameter_count();
  g_last_error.clear();
  return ENDREG_OK;
}

int endreg_model_predict(const endreg_model* model, const endreg_dataset* ds,
                         uint16_t* predictions) {
  if (model == nullptr) return null_arg("model");
  if (ds == nullptr) return null_arg("ds");
  if (predictions == nullptr) return null_arg("predictions");
  return guard([&] {
    const auto pred = endreg::predict(model->net, ds->ds);
    std::copy(pred.begin(), pred.end(), predictions);
    return ENDREG_OK;
  });
}

int endreg_model_evaluate(const endreg_model* model, const endreg_dataset* ds,
                          char** json) {
  if (model == nullptr) return null_arg("model");
  if (ds == nullptr) return null_arg("ds");
  if (json == nullptr) return null_arg("json");
  return guard([&] {
    *json = dup_string(endreg::eval_report_json(endreg::evaluate(model->net, ds->ds)));
    return ENDREG_OK;
  });
}

void endreg_model_free(endreg_model* model) { delete model; }

int endreg_regularizer(const double* features, size_t n_features, size_t n_samples,
                       const uint16_t* targets, const uint16_t* biases,
                       size_t n_targets, size_t n_biases, double alpha, double beta,
                       double* r_perp, double* r_par, double* r, size_t* skipped,
                       double* grad) {
  if (features == nullptr && n_features * n_samples != 0) return null_arg("features");
  if ((targets == nullptr || biases == nullptr) && n_samples != 0)
    return null_arg("labels");
  return guard([&] {
    endreg::LabeledBatch batch;
    batch.features = endreg::Matrix::from_data(
        n_features, n_samples,
        std::vector<double>(features, features + n_features * n_samples));
    batch.targets.assign(targets, targets + n_samples);
    batch.biases.assign(biases, biases + n_samples);
    batch.num_targets = n_targets;
    batch.num_biases = n_biases;
    endreg::EnDConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    const endreg::RegularizerOutput out = endreg::end_regularizer(batch, cfg);
    if (r_perp) *r_perp = out.r_perp;
    if (r_par) *r_par = out.r_par;
    if (r) *r = out.r;
    if (skipped) *skipped = out.skipped;
    if (grad) std::copy(out.grad.data().begin(), out.grad.data().end(), grad);
    return ENDREG_OK;
  });
}

#define ENDREG_RUN(name, fn)                                         \
  int name(const endreg_config* cfg, char** report) {                \
    if (cfg == nullptr) return null_arg("cfg");                      \
    return guard([&] {                                               \
      hand_out(report, fn(cfg->cfg));                                \
      return ENDREG_OK;                                              \
    });                                                              \
  }

ENDREG_RUN(endreg_run_generate, endreg::run_generate)
ENDREG_RUN(endreg_run_train, endreg::run_train)
ENDREG_RUN(endreg_run_eval, endreg::run_eval)
ENDREG_RUN(endreg_run_ablate, endreg::run_ablate)

#undef ENDREG_RUN

int endreg_run_gradcheck(const endreg_config* cfg, char** report) {
  if (cfg == nullptr) return null_arg("cfg");
  return guard([&] {
    bool passed = false;
    const std::string text = endreg::run_gradcheck(cfg->cfg, &passed);
    hand_out(report, text);
    if (!passed) {
      g_last_error = "gradient check exceeded its tolerance";
      return static_cast<int>(ENDREG_ERR_CHECK_FAILED);
    }
    return static_cast<int>(ENDREG_OK);
  });
}

}  // extern "C"
