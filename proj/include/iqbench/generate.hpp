#pragma once

#include <cstdint>
#include <filesystem>

#include "iqbench/dataset.hpp"
#include "iqbench/signal.hpp"

namespace iqbench {

struct GeneratedDataset {
  IQDataset dataset;
  SplitManifest split;
};

/// Balanced grid of per_class_count records for every (modulation, azimuth
/// bin) cell, unit-max normalised, labelled {"modulation", "aoa_bin"}, with
/// a 70/30 split stratified per cell. Record r draws from its own RNG
/// stream derived from config.seed.
GeneratedDataset build_dataset(const SynthesisConfig& config, std::size_t per_class_count,
                               double train_fraction = 0.7);

// build_dataset, then the dataset file and its split manifest next to it.
GeneratedDataset build_dataset_file(const SynthesisConfig& config, std::size_t per_class_count,
                                    const std::filesystem::path& path, double train_fraction = 0.7);

}  // namespace iqbench
