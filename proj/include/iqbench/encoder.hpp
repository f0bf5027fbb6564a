#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "iqbench/autograd.hpp"
#include "iqbench/checkpoint.hpp"
#include "iqbench/dataset.hpp"
#include "iqbench/optim.hpp"
#include "iqbench/tensor.hpp"

namespace iqbench {

struct EncoderConfig {
  std::size_t antennas = 4;
  std::size_t time = 256;
  std::vector<std::size_t> widths{24, 48, 96};
  std::vector<std::size_t> strides{2, 2, 2};
  std::size_t kernel = 7;
  std::size_t embedding_dim = 128;
  std::size_t projection_hidden = 128;  // 0 -> single linear projection
  std::size_t projection_dim = 64;
  bool input_norm = false;              // unit-max rescale of every input record

  void validate() const;
  // Shortest record the stride chain accepts.
  std::size_t min_time() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

enum class LayerKind { kConv, kLinear };

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::kLinear;
  Tensor weight;  // conv: [out, in, kh, kw]; linear: [out, in]
  Tensor bias;    // [out]
  Conv2dGeometry geom;

  std::size_t fan_in() const;
  std::size_t fan_out() const { return weight.shape[0]; }
};

// Substitutes the weight used by a layer during one forward pass.
using WeightHook = std::function<Var(Tape& tape, const Layer& layer, Var weight)>;

// Trainable scalars of an encoder plus projection head.
std::size_t parameter_count(const EncoderConfig& config);

/// Strided convolution stack f and projection head g.
///
/// Input [B, M, 2, T]: antennas are input channels, the first kernel spans
/// the I/Q axis, later kernels run along time only. Global average pooling
/// feeds the embedding map, so any T >= min_time() is accepted.
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& config, std::uint64_t seed = 0);

  const EncoderConfig& config() const { return config_; }

  std::vector<Layer>& backbone() { return backbone_; }
  const std::vector<Layer>& backbone() const { return backbone_; }
  std::vector<Layer>& head() { return head_; }
  const std::vector<Layer>& head() const { return head_; }

  // x: [B, M, 2, T] -> [B, D]
  Var encode(Tape& tape, Var x, const WeightHook& hook = {});
  // h: [B, D] -> [B, P] with unit rows
  Var project(Tape& tape, Var h, const WeightHook& hook = {});

  std::vector<NamedTensor> parameters(bool include_head = true);
  void set_trainable(bool backbone, bool head);
  std::size_t parameter_count() const;

  Checkpoint to_checkpoint() const;
  static Encoder from_checkpoint(const Checkpoint& checkpoint);
  // FNV-1a over every parameter value, in layer order.
  std::uint64_t digest() const;

 private:
  Var apply(Tape& tape, Layer& layer, Var x, const WeightHook& hook);

  EncoderConfig config_;
  std::vector<Layer> backbone_;
  std::vector<Layer> head_;
};

// Gradient-free embeddings of a [B, M, 2, T] batch.
Tensor embed(Encoder& encoder, const Tensor& batch, const WeightHook& hook = {});
// Embeddings [indices.size(), D] of dataset records, zero-padding antennas.
Tensor embed_dataset(Encoder& encoder, const IQDataset& dataset,
                     std::span<const std::size_t> indices, std::size_t batch_size = 256,
                     const WeightHook& hook = {});

}  // namespace iqbench
