#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iqbench/tensor.hpp"

namespace iqbench {

inline constexpr std::int32_t kUnlabeled = -1;

/// In-memory labelled IQ dataset: N records of M x 2 x T samples.
///
/// Samples are held as doubles; on disk they are 32-bit floats, so values
/// produced by the library are rounded to float precision on creation and
/// survive a write/read cycle unchanged.
struct IQDataset {
  std::size_t count = 0;
  std::size_t antennas = 0;
  std::size_t time = 0;
  std::vector<double> samples;             // count * antennas * 2 * time
  std::vector<std::string> label_fields;   // e.g. {"modulation", "aoa_bin"}
  std::vector<std::int32_t> labels;        // count * label_fields.size(), sample-major
  std::string provenance;

  std::size_t sample_size() const { return antennas * 2 * time; }
  std::span<const double> sample(std::size_t i) const;
  std::int32_t label(std::size_t i, std::size_t field) const;
  std::size_t field_index(std::string_view name) const;
  bool has_field(std::string_view name) const;
  std::vector<int> label_column(std::string_view name) const;

  void validate() const;
};

struct DatasetHeader {
  std::size_t count = 0;
  std::size_t antennas = 0;
  std::size_t time = 0;
  int dtype = 0;  // 0 = float32
  std::vector<std::string> label_fields;
  std::string provenance;
};

inline constexpr char kDatasetMagic[4] = {'I', 'Q', 'D', 'S'};
inline constexpr std::uint16_t kDatasetVersion = 1;

// Byte-level container; see README for the layout.
std::string encode_dataset(const IQDataset& dataset);
IQDataset decode_dataset(std::string_view bytes);

void write_dataset(const IQDataset& dataset, const std::filesystem::path& path);
IQDataset read_dataset(const std::filesystem::path& path);
DatasetHeader read_dataset_header(const std::filesystem::path& path);

/// Loads an externally converted float32 array described by a JSON sidecar:
///   {"n": N, "m": M, "t": T, "dtype": "float32", "labels": ["modulation"],
///    "data": "payload.f32", "label_data": "labels.i32"}
/// `data` and `label_data` are resolved relative to the sidecar; without
/// `label_data` every label is kUnlabeled.
IQDataset import_raw(const std::filesystem::path& sidecar);

/// Stacks records into a [B, antennas, 2, T] tensor. Records with fewer
/// antennas than requested are zero-padded in the missing rows.
Tensor make_batch(const IQDataset& dataset, std::span<const std::size_t> indices,
                  std::size_t antennas);

struct SplitManifest {
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per-class split: round(train_fraction * n_c) records of each class go to train.
SplitManifest stratified_split(std::span<const int> classes, double train_fraction,
                               std::uint64_t seed);

void write_split(const SplitManifest& split, const std::filesystem::path& path);
SplitManifest read_split(const std::filesystem::path& path);

// Canonical split-manifest path next to a dataset file: <stem>.split.json
std::filesystem::path split_path_for(const std::filesystem::path& dataset_path);

}  // namespace iqbench
