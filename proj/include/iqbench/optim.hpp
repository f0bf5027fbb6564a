#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iqbench/tensor.hpp"

namespace iqbench {

struct NamedTensor {
  std::string name;
  Tensor* tensor = nullptr;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct MomentBuffers {
  std::vector<double> first;
  std::vector<double> second;
};

struct OptimizerState {
  AdamWConfig config;
  std::vector<MomentBuffers> moments;  // one per parameter, same order
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const std::vector<NamedTensor>& params,
                                    const AdamWConfig& config = {});

// One decoupled-weight-decay Adam update using each parameter's `grad`.
// Parameters without a gradient buffer are treated as having zero gradient.
void adamw_step(const std::vector<NamedTensor>& params, OptimizerState& state, double lr);

class AdamW {
 public:
  AdamW(std::vector<NamedTensor> params, const AdamWConfig& config = {});

  void zero_grad();
  void step(double lr);

  const OptimizerState& state() const { return state_; }
  const std::vector<NamedTensor>& params() const { return params_; }

 private:
  std::vector<NamedTensor> params_;
  OptimizerState state_;
};

// lr_min + 0.5 (lr0 - lr_min)(1 + cos(pi * epoch / total_epochs))
double cosine_anneal(double lr0, std::size_t epoch, std::size_t total_epochs, double lr_min);

inline constexpr double kDefaultMinLearningRate = 1e-7;

}  // namespace iqbench
