#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "iqbench/checkpoint.hpp"
#include "iqbench/dataset.hpp"
#include "iqbench/encoder.hpp"

namespace iqbench {

struct FewShotSplit {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Up to k records per class, drawn without replacement from `train_pool`;
// the test list is copied from `test_pool` untouched.
FewShotSplit few_shot_split(std::span<const int> labels, std::span<const std::size_t> train_pool,
                            std::span<const std::size_t> test_pool, std::size_t k,
                            std::uint64_t seed);

void write_few_shot_split(const FewShotSplit& split, const std::filesystem::path& path);
FewShotSplit read_few_shot_split(const std::filesystem::path& path);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<int> predictions;
};

Evaluation evaluate(std::span<const int> predictions, std::span<const int> truth,
                    std::size_t classes);

struct TrainOptions {
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
};

TrainOptions probe_defaults();       // lr 1e-3, 100 epochs
TrainOptions lora_defaults();        // lr 1e-2, 100 epochs
TrainOptions supervised_defaults();  // lr 1e-2, 100 epochs

/// Affine classifier on frozen embeddings. Features are standardised with
/// the training-set mean and deviation before the linear map.
struct ProbeHead {
  Tensor weight;  // [K, D]
  Tensor bias;    // [K]
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;

  std::vector<int> predict(const Tensor& features) const;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  std::size_t params_trainable = 0;
};

ProbeHead train_linear_probe(const Tensor& train_features, std::span<const int> train_labels,
                             std::size_t classes, const TrainOptions& options,
                             TrainResult* result = nullptr, bool standardize = true);

struct LoraConfig {
  std::size_t rank = 1;
  double alpha = 10.0;
  bool wrap_convolutions = true;
  bool wrap_linear = false;
};

struct LoraAdapter {
  std::string layer;
  Tensor a;  // [r, fan_in]
  Tensor b;  // [fan_out, r]
  double scaling = 0.0;  // alpha / r
};

/// Low-rank adapters on a frozen encoder: W_eff = W + (alpha / r) B A, with
/// convolution kernels flattened to [out, in * kh * kw].
class LoraStack {
 public:
  LoraStack(Encoder& base, const LoraConfig& config, std::uint64_t seed);

  WeightHook hook();
  std::vector<LoraAdapter>& adapters() { return adapters_; }
  const std::vector<LoraAdapter>& adapters() const { return adapters_; }
  const LoraConfig& config() const { return config_; }
  std::size_t trainable_count() const;
  std::vector<NamedTensor> parameters();

  // Copy of the base encoder with the adapters folded into its weights.
  Encoder merged() const;

  Checkpoint to_checkpoint() const;
  void load(const Checkpoint& checkpoint);

 private:
  Encoder* base_;
  LoraConfig config_;
  std::vector<LoraAdapter> adapters_;
};

// Rejects r above min(fan_in, fan_out) of any wrapped layer.
LoraStack lora_wrap(Encoder& base, const LoraConfig& config, std::uint64_t seed);

/// Encoder plus linear task head trained end to end on raw records. With a
/// LoraStack only the adapters and head learn; without one every encoder
/// weight does.
struct Classifier {
  Encoder* encoder = nullptr;
  LoraStack* lora = nullptr;
  Tensor head_weight;  // [K, D]
  Tensor head_bias;    // [K]

  std::vector<int> predict(const IQDataset& dataset, std::span<const std::size_t> indices,
                           std::size_t batch_size = 256);
};

Classifier make_classifier(Encoder& encoder, LoraStack* lora, std::size_t classes,
                           std::uint64_t seed);

TrainResult train_classifier(Classifier& model, const IQDataset& dataset,
                             std::span<const std::size_t> train, std::span<const int> labels,
                             const TrainOptions& options);

// lora_wrap + head training; the base encoder stays bit-identical.
TrainResult train_lora(Classifier& model, const IQDataset& dataset,
                       std::span<const std::size_t> train, std::span<const int> labels,
                       const TrainOptions& options);

// Fresh encoder trained from random init.
TrainResult train_supervised_baseline(Classifier& model, const IQDataset& dataset,
                                      std::span<const std::size_t> train,
                                      std::span<const int> labels, const TrainOptions& options);

struct AdaptMetrics {
  std::string task;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string method;
  double accuracy = 0.0;
  std::size_t params_trainable = 0;

  nlohmann::json to_json() const;
};

}  // namespace iqbench
