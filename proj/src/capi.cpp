#include "iqbench/iqbench.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "json.hpp"
#include "iqbench/checkpoint.hpp"
#include "iqbench/dataset.hpp"
#include "iqbench/encoder.hpp"
#include "iqbench/error.hpp"
#include "iqbench/pipeline.hpp"

using nlohmann::json;
using namespace iqbench;

struct iqb_config {
  RunConfig config;
};

struct iqb_dataset {
  IQDataset dataset;
};

struct iqb_encoder {
  Encoder encoder;
};

namespace {

thread_local std::string g_last_error;

iqb_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return IQB_ERR_INVALID_ARGUMENT;
    case ErrorCode::kShapeMismatch: return IQB_ERR_SHAPE;
    case ErrorCode::kNumeric: return IQB_ERR_NUMERIC;
    case ErrorCode::kIo: return IQB_ERR_IO;
    case ErrorCode::kBadMagic: return IQB_ERR_BAD_MAGIC;
    case ErrorCode::kUnsupportedVersion: return IQB_ERR_VERSION;
    case ErrorCode::kTruncated: return IQB_ERR_TRUNCATED;
    case ErrorCode::kHeaderMismatch: return IQB_ERR_HEADER;
    case ErrorCode::kConfig: return IQB_ERR_CONFIG;
  }
  return IQB_ERR_INTERNAL;
}

template <typename F>
iqb_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return IQB_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return IQB_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return IQB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return IQB_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

json* lookup(json& j, const std::string& k) {
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = k.find('.', start);
    const auto part = k.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!part.empty(), ErrorCode::kConfig, "malformed key '" + k + "'");
    require(node->is_object() && node->contains(part), ErrorCode::kConfig,
            "unknown configuration key '" + k + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

}  // namespace

extern "C" {

const char* iqb_version(void) { return "0.1.0"; }

const char* iqb_last_error(void) { return g_last_error.c_str(); }

const char* iqb_status_name(iqb_status status) {
  switch (status) {
    case IQB_OK: return "ok";
    case IQB_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case IQB_ERR_SHAPE: return "shape_mismatch";
    case IQB_ERR_NUMERIC: return "numeric";
    case IQB_ERR_IO: return "io";
    case IQB_ERR_BAD_MAGIC: return "bad_magic";
    case IQB_ERR_VERSION: return "unsupported_version";
    case IQB_ERR_TRUNCATED: return "truncated";
    case IQB_ERR_HEADER: return "header_mismatch";
    case IQB_ERR_CONFIG: return "config";
    case IQB_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int iqb_exit_code(iqb_status status) {
  switch (status) {
    case IQB_OK: return 0;
    case IQB_ERR_NUMERIC: return 2;
    case IQB_ERR_IO:
    case IQB_ERR_BAD_MAGIC:
    case IQB_ERR_VERSION:
    case IQB_ERR_TRUNCATED:
    case IQB_ERR_HEADER: return 3;
    default: return 1;
  }
}

void iqb_string_free(char* s) { std::free(s); }

iqb_status iqb_config_new(iqb_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new iqb_config{};
  });
}

iqb_status iqb_config_load(const char* path, iqb_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new iqb_config{load_run_config(path)};
  });
}

iqb_status iqb_config_from_json(const char* text, iqb_config** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    *out = new iqb_config{RunConfig::from_json(json::parse(text))};
  });
}

void iqb_config_free(iqb_config* config) { delete config; }

namespace {

void assign(json& tree, const char* key, const char* json_value) {
  need(key, "key");
  need(json_value, "json_value");
  json* node = lookup(tree, key);
  try {
    *node = json::parse(json_value);
  } catch (const json::exception&) {
    // Bare words are accepted as strings.
    *node = std::string(json_value);
  }
}

}  // namespace

iqb_status iqb_config_set(iqb_config* config, const char* key, const char* json_value) {
  return iqb_config_set_many(config, &key, &json_value, 1);
}

iqb_status iqb_config_set_many(iqb_config* config, const char* const* keys,
                               const char* const* json_values, size_t count) {
  return guard([&] {
    need(config, "config");
    if (count > 0) {
      need(keys, "keys");
      need(json_values, "json_values");
    }
    auto j = config->config.to_json();
    for (size_t i = 0; i < count; ++i) assign(j, keys[i], json_values[i]);
    config->config = RunConfig::from_json(j);
  });
}

iqb_status iqb_config_get(const iqb_config* config, const char* key, char** out) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(out, "out");
    auto j = config->config.to_json();
    *out = dup_string(lookup(j, key)->dump());
  });
}

iqb_status iqb_config_to_json(const iqb_config* config, char** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    *out = dup_string(config->config.to_json().dump(2));
  });
}

iqb_status iqb_run(const iqb_config* config, const char* command, char** result) {
  return guard([&] {
    need(config, "config");
    need(command, "command");
    const auto summary = run_command(command, config->config);
    if (result) *result = dup_string(summary.dump(2));
  });
}

iqb_status iqb_dataset_open(const char* path, iqb_dataset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new iqb_dataset{read_dataset(path)};
  });
}

void iqb_dataset_free(iqb_dataset* dataset) { delete dataset; }

size_t iqb_dataset_count(const iqb_dataset* dataset) { return dataset ? dataset->dataset.count : 0; }

size_t iqb_dataset_antennas(const iqb_dataset* dataset) {
  return dataset ? dataset->dataset.antennas : 0;
}

size_t iqb_dataset_time(const iqb_dataset* dataset) { return dataset ? dataset->dataset.time : 0; }

iqb_status iqb_dataset_record(const iqb_dataset* dataset, size_t index, double* buffer,
                              size_t capacity) {
  return guard([&] {
    need(dataset, "dataset");
    need(buffer, "buffer");
    const auto& ds = dataset->dataset;
    require(index < ds.count, ErrorCode::kInvalidArgument, "record index out of range");
    require(capacity >= ds.sample_size(), ErrorCode::kInvalidArgument, "buffer too small");
    const auto s = ds.sample(index);
    std::copy(s.begin(), s.end(), buffer);
  });
}

iqb_status iqb_dataset_label(const iqb_dataset* dataset, size_t index, const char* field,
                             int32_t* out) {
  return guard([&] {
    need(dataset, "dataset");
    need(field, "field");
    need(out, "out");
    const auto& ds = dataset->dataset;
    require(index < ds.count, ErrorCode::kInvalidArgument, "record index out of range");
    *out = ds.label(index, ds.field_index(field));
  });
}

iqb_status iqb_encoder_load(const char* path, iqb_encoder** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new iqb_encoder{Encoder::from_checkpoint(read_checkpoint(path))};
  });
}

void iqb_encoder_free(iqb_encoder* encoder) { delete encoder; }

size_t iqb_encoder_embedding_dim(const iqb_encoder* encoder) {
  return encoder ? encoder->encoder.config().embedding_dim : 0;
}

size_t iqb_encoder_parameter_count(const iqb_encoder* encoder) {
  return encoder ? encoder->encoder.parameter_count() : 0;
}

uint64_t iqb_encoder_digest(const iqb_encoder* encoder) {
  return encoder ? encoder->encoder.digest() : 0;
}

iqb_status iqb_encoder_embed(iqb_encoder* encoder, const double* records, size_t count,
                             double* out, size_t capacity) {
  return guard([&] {
    need(encoder, "encoder");
    need(records, "records");
    need(out, "out");
    const auto& c = encoder->encoder.config();
    require(count > 0, ErrorCode::kInvalidArgument, "count must be positive");
    require(capacity >= count * c.embedding_dim, ErrorCode::kInvalidArgument, "output too small");
    const auto n = count * c.antennas * 2 * c.time;
    Tensor batch({count, c.antennas, 2, c.time}, std::vector<double>(records, records + n));
    const auto h = embed(encoder->encoder, batch);
    std::copy(h.data.begin(), h.data.end(), out);
  });
}

}  // extern "C"
