#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "iqbench/augment.hpp"
#include "iqbench/dataset.hpp"
#include "iqbench/encoder.hpp"

namespace iqbench {

struct SslConfig {
  std::size_t batch_size = 64;
  double temperature = 1.5;
  std::size_t epochs = 20;
  double lr = 0.1;
  double lr_min = kDefaultMinLearningRate;
  double weight_decay = 1e-2;
  AugmentationPolicy policy;
  std::uint64_t seed = 0;
  bool early_stop = false;
  double plateau_tolerance = 1e-4;  // relative change
  std::size_t plateau_epochs = 3;

  void validate() const;
};

// Table II column (policy, learning rate, temperature) for the task.
SslConfig ssl_preset(Task task);

// S(i, j) = z_i . z_j / (|z_i| |z_j|) for the rows of a [n, P] matrix.
Tensor cosine_similarity_matrix(const Tensor& z);
// Mean over the 2N rows of -log softmax(S / tau) at the partner column,
// self-similarity excluded.
double info_nce_loss(const Tensor& similarity, double temperature);

struct EpochStat {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  std::vector<EpochStat> trace;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochStat&)>;

/// Contrastive pretraining over the listed dataset records.
///
/// Each minibatch draws two views per record, encodes and projects all 2N
/// views, and takes one AdamW step on the InfoNCE loss. The learning rate
/// follows the cosine schedule per epoch. A non-finite loss raises
/// ErrorCode::kNumeric with the batch index, learning rate and temperature.
PretrainResult pretrain(Encoder& encoder, const IQDataset& dataset,
                        std::span<const std::size_t> indices, const SslConfig& config,
                        const EpochCallback& on_epoch = {});

void write_loss_csv(const std::vector<EpochStat>& trace, const std::filesystem::path& path);

}  // namespace iqbench
