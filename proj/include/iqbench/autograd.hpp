#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "iqbench/tensor.hpp"

namespace iqbench {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(std::uint64_t tape, std::size_t id) : tape_(tape), id_(id) {}
  std::uint64_t tape_ = 0;
  std::size_t id_ = 0;
};

/// View handed to a node's backward function.
class BackwardContext {
 public:
  const std::vector<double>& out_grad() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  // Gradient buffer of input i, zero-initialised on first access; nullptr
  // when that input does not need a gradient.
  std::vector<double>* input_grad(std::size_t i);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}
  Tape& tape_;
  std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Linear record of forward computations for reverse-mode differentiation.
///
/// Parameters enter through parameter(): the tape keeps a pointer to the
/// caller's Tensor and, on backward(), adds the gradient into its `grad`
/// field when `requires_grad` is set. The bound tensors must outlive the
/// backward pass. A tape supports a single backward() call.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor& param);

  const Tensor& value(Var v) const;
  // Gradient of an intermediate after backward(); empty if it had none.
  const std::vector<double>& grad(Var v) const;
  bool needs_grad(Var v) const;

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool needs_grad = false;
  };

  std::size_t check(Var v) const;

  std::uint64_t serial_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

struct Conv2dGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

enum class OpKind {
  kAdd,
  kMul,
  kScale,
  kSum,
  kMean,
  kRelu,
  kLinear,
  kMatMul,
  kReshape,
  kConv2d,
  kGlobalAvgPool,
  kL2Normalize,
  kInfoNce,
  kSoftmaxCrossEntropy,
};

const char* op_name(OpKind kind);

struct OpAttrs {
  Conv2dGeometry conv;
  double scalar = 1.0;      // scale factor, InfoNCE temperature
  double eps = 1e-12;       // L2 normalisation floor
  bool transpose_b = false; // matmul
  Shape shape;              // reshape target
  std::vector<int> labels;  // cross-entropy targets
};

// Generic entry point; dispatches to the typed functions below.
Var forward_op(Tape& tape, OpKind kind, std::span<const Var> inputs,
               const OpAttrs& attrs = {});

Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double s);
Var sum(Tape& tape, Var a);
Var mean(Tape& tape, Var a);
Var relu(Tape& tape, Var a);
// x: [B, in], w: [out, in], b: [out]
Var linear(Tape& tape, Var x, Var w, std::optional<Var> b = std::nullopt);
// a: [m, k], b: [k, n] (or [n, k] with transpose_b)
Var matmul(Tape& tape, Var a, Var b, bool transpose_b = false);
Var reshape(Tape& tape, Var a, Shape shape);
// x: [B, C, H, W], w: [O, C, KH, KW], b: [O]
Var conv2d(Tape& tape, Var x, Var w, std::optional<Var> b,
           const Conv2dGeometry& geom);
// [B, C, H, W] -> [B, C]
Var global_avg_pool(Tape& tape, Var x);
// Row-wise x / max(||x||, eps) over the last axis of a [B, D] tensor.
Var l2_normalize(Tape& tape, Var x, double eps = 1e-12);
// Contrastive loss over a [2N, 2N] similarity matrix whose positives are the
// consecutive pairs (0,1), (2,3), ...; self-similarity is excluded.
Var info_nce(Tape& tape, Var sim, double temperature);
// Mean softmax cross-entropy of logits [B, K] against integer labels.
Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels);

}  // namespace iqbench
