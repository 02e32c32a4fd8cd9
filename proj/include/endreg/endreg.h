#ifndef ENDREG_ENDREG_H
#define ENDREG_ENDREG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ENDREG_API __declspec(dllexport)
#else
#define ENDREG_API __attribute__((visibility("default")))
#endif

/* Status codes double as CLI exit codes. */
typedef enum endreg_status {
  ENDREG_OK = 0,
  ENDREG_ERR_USAGE = 1,        /* bad command line */
  ENDREG_ERR_CONFIG = 2,       /* unknown key, bad value, missing path */
  ENDREG_ERR_IO = 3,           /* file cannot be read or written */
  ENDREG_ERR_FORMAT = 4,       /* malformed ENDD, ENDM or IDX bytes */
  ENDREG_ERR_SPEC = 5,         /* inconsistent dataset specification */
  ENDREG_ERR_SPLIT = 6,        /* evaluation split cannot be built */
  ENDREG_ERR_EVAL = 7,         /* empty evaluation set */
  ENDREG_ERR_DIMENSION = 8,    /* shape mismatch */
  ENDREG_ERR_PRECONDITION = 9, /* argument outside its contract */
  ENDREG_ERR_DEGENERATE = 10,  /* zero-norm feature vector */
  ENDREG_ERR_CHECK_FAILED = 11,/* gradcheck exceeded its tolerance */
  ENDREG_ERR_INVALID_ARGUMENT = 12, /* null handle or pointer */
  ENDREG_ERR_INTERNAL = 13
} endreg_status;

typedef struct endreg_config endreg_config;
typedef struct endreg_dataset endreg_dataset;
typedef struct endreg_model endreg_model;

ENDREG_API const char* endreg_version(void);
ENDREG_API const char* endreg_status_name(int status);
/* Message of the last failing call on this thread; "" after success. */
ENDREG_API const char* endreg_last_error(void);
/* Strings returned through char** out-parameters. */
ENDREG_API void endreg_string_free(char* s);

/* Configuration: flat key=value text. Each set re-validates the whole
   configuration; values set here take precedence over the file. */
ENDREG_API int endreg_config_new(endreg_config** out);
ENDREG_API int endreg_config_load(const char* path, endreg_config** out);
ENDREG_API int endreg_config_set(endreg_config* cfg, const char* key,
                                 const char* value);
/* Applies n pairs at once; validation sees only the final state. */
ENDREG_API int endreg_config_set_many(endreg_config* cfg, const char* const* keys,
                                      const char* const* values, size_t n);
/* Effective value of a key, defaults included. */
ENDREG_API int endreg_config_get(const endreg_config* cfg, const char* key,
                                 char** value);
/* Documented schema, one "key<TAB>type<TAB>help" line per key. */
ENDREG_API int endreg_config_schema(char** text);
ENDREG_API void endreg_config_free(endreg_config* cfg);

/* split: 0 train, 1 biased test, 2 unbiased test, 3 bias-conflicting. */
ENDREG_API int endreg_dataset_generate(const endreg_config* cfg, int split,
                                       endreg_dataset** out);
ENDREG_API int endreg_dataset_read(const char* path, endreg_dataset** out);
ENDREG_API int endreg_dataset_write(const endreg_dataset* ds, const char* path);
ENDREG_API int endreg_dataset_shape(const endreg_dataset* ds, size_t* samples,
                                    size_t* height, size_t* width,
                                    size_t* channels, size_t* targets,
                                    size_t* biases);
/* Copies labels into caller arrays of length `samples`; either may be null. */
ENDREG_API int endreg_dataset_labels(const endreg_dataset* ds, uint16_t* targets,
                                     uint16_t* biases);
ENDREG_API void endreg_dataset_free(endreg_dataset* ds);

ENDREG_API int endreg_model_load(const char* path, endreg_model** out);
ENDREG_API int endreg_model_save(const endreg_model* model, const char* path);
ENDREG_API int endreg_model_parameter_count(const endreg_model* model,
                                            size_t* count);
/* Predicted target per sample into a caller array of length `samples`. */
ENDREG_API int endreg_model_predict(const endreg_model* model,
                                    const endreg_dataset* ds,
                                    uint16_t* predictions);
/* EvalReport as JSON. */
ENDREG_API int endreg_model_evaluate(const endreg_model* model,
                                     const endreg_dataset* ds, char** json);
ENDREG_API void endreg_model_free(endreg_model* model);

/* Regularizer on raw features. `features` is n_features x n_samples,
   row-major (one column per sample). `grad` receives dR/dy in the same
   layout and may be null. Any of the scalar outputs may be null. */
ENDREG_API int endreg_regularizer(const double* features, size_t n_features,
                                  size_t n_samples, const uint16_t* targets,
                                  const uint16_t* biases, size_t n_targets,
                                  size_t n_biases, double alpha, double beta,
                                  double* r_perp, double* r_par, double* r,
                                  size_t* skipped, double* grad);

/* Commands. Each writes only inside the configured out_dir and returns a
   JSON report through `report` (may be null). */
ENDREG_API int endreg_run_generate(const endreg_config* cfg, char** report);
ENDREG_API int endreg_run_train(const endreg_config* cfg, char** report);
ENDREG_API int endreg_run_eval(const endreg_config* cfg, char** report);
ENDREG_API int endreg_run_ablate(const endreg_config* cfg, char** report);
ENDREG_API int endreg_run_gradcheck(const endreg_config* cfg, char** report);

#ifdef __cplusplus
}
#endif

#endif
