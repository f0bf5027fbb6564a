/* iqbench C interface.
 *
 * All objects are opaque handles owned by the caller and released with the
 * matching *_free function. Functions return an iqb_status; on failure the
 * thread-local message from iqb_last_error() describes the cause. Strings
 * returned through out-parameters are heap allocated and must be released
 * with iqb_string_free.
 */
#ifndef IQBENCH_IQBENCH_H
#define IQBENCH_IQBENCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define IQB_API __declspec(dllexport)
#else
#define IQB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum iqb_status {
  IQB_OK = 0,
  IQB_ERR_INVALID_ARGUMENT = 1,
  IQB_ERR_SHAPE = 2,
  IQB_ERR_NUMERIC = 3,
  IQB_ERR_IO = 4,
  IQB_ERR_BAD_MAGIC = 5,
  IQB_ERR_VERSION = 6,
  IQB_ERR_TRUNCATED = 7,
  IQB_ERR_HEADER = 8,
  IQB_ERR_CONFIG = 9,
  IQB_ERR_INTERNAL = 10
} iqb_status;

typedef struct iqb_config iqb_config;
typedef struct iqb_dataset iqb_dataset;
typedef struct iqb_encoder iqb_encoder;

IQB_API const char* iqb_version(void);
IQB_API const char* iqb_last_error(void);
IQB_API const char* iqb_status_name(iqb_status status);

/* Process exit code for a status: 0 ok, 1 usage/config, 2 numeric, 3 I/O. */
IQB_API int iqb_exit_code(iqb_status status);

IQB_API void iqb_string_free(char* s);

/* Run configuration. */
IQB_API iqb_status iqb_config_new(iqb_config** out);
IQB_API iqb_status iqb_config_load(const char* path, iqb_config** out);
IQB_API iqb_status iqb_config_from_json(const char* text, iqb_config** out);
IQB_API void iqb_config_free(iqb_config* config);

/* Overrides one key. `key` is dotted ("ssl.epochs"); `json_value` is a JSON
 * literal ("5", "\"ssl-aoa\"", "[1,2]"). Unknown keys are rejected. */
IQB_API iqb_status iqb_config_set(iqb_config* config, const char* key, const char* json_value);

/* Applies `count` overrides together and validates once, so coupled keys
 * (encoder.widths and encoder.strides) can change in one call. On error the
 * configuration is left unchanged. */
IQB_API iqb_status iqb_config_set_many(iqb_config* config, const char* const* keys,
                                       const char* const* json_values, size_t count);

/* Current value of one dotted key as a JSON literal. */
IQB_API iqb_status iqb_config_get(const iqb_config* config, const char* key, char** out);

/* Resolved configuration as JSON. */
IQB_API iqb_status iqb_config_to_json(const iqb_config* config, char** out);

/* Runs gen | pretrain | adapt | sweep | cluster | ablate | report. The JSON
 * summary is written to *result when result is non-null. */
IQB_API iqb_status iqb_run(const iqb_config* config, const char* command, char** result);

/* Datasets. */
IQB_API iqb_status iqb_dataset_open(const char* path, iqb_dataset** out);
IQB_API void iqb_dataset_free(iqb_dataset* dataset);
IQB_API size_t iqb_dataset_count(const iqb_dataset* dataset);
IQB_API size_t iqb_dataset_antennas(const iqb_dataset* dataset);
IQB_API size_t iqb_dataset_time(const iqb_dataset* dataset);
/* Copies record `index` as [antennas][2][time] doubles into `buffer`. */
IQB_API iqb_status iqb_dataset_record(const iqb_dataset* dataset, size_t index, double* buffer,
                                      size_t capacity);
IQB_API iqb_status iqb_dataset_label(const iqb_dataset* dataset, size_t index, const char* field,
                                     int32_t* out);

/* Encoders. */
IQB_API iqb_status iqb_encoder_load(const char* path, iqb_encoder** out);
IQB_API void iqb_encoder_free(iqb_encoder* encoder);
IQB_API size_t iqb_encoder_embedding_dim(const iqb_encoder* encoder);
IQB_API size_t iqb_encoder_parameter_count(const iqb_encoder* encoder);
IQB_API uint64_t iqb_encoder_digest(const iqb_encoder* encoder);
/* Embeds `count` records laid out [count][antennas][2][time] into
 * `out` ([count][embedding_dim]). */
IQB_API iqb_status iqb_encoder_embed(iqb_encoder* encoder, const double* records, size_t count,
                                     double* out, size_t capacity);

#ifdef __cplusplus
}
#endif

#endif
