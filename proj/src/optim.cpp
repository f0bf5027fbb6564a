#include "iqbench/optim.hpp"

#include <cmath>
#include <numbers>

#include "iqbench/error.hpp"

namespace iqbench {

OptimizerState make_optimizer_state(const std::vector<NamedTensor>& params,
                                    const AdamWConfig& config) {
  OptimizerState state;
  state.config = config;
  state.moments.reserve(params.size());
  for (const auto& p : params) {
    require(p.tensor != nullptr, ErrorCode::kInvalidArgument, "null parameter " + p.name);
    state.moments.push_back({std::vector<double>(p.tensor->numel(), 0.0),
                             std::vector<double>(p.tensor->numel(), 0.0)});
  }
  return state;
}

void adamw_step(const std::vector<NamedTensor>& params, OptimizerState& state, double lr) {
  require(lr > 0.0 && std::isfinite(lr), ErrorCode::kInvalidArgument,
          "adamw_step: learning rate must be positive and finite");
  require(params.size() == state.moments.size(), ErrorCode::kShapeMismatch,
          "adamw_step: optimizer state tracks " + std::to_string(state.moments.size()) +
              " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i].tensor;
    require(state.moments[i].first.size() == p.numel(), ErrorCode::kShapeMismatch,
            "adamw_step: moment shape mismatch for " + params[i].name);
    for (double g : p.grad) {
      require(std::isfinite(g), ErrorCode::kNumeric,
              "adamw_step: non-finite gradient in parameter " + params[i].name);
    }
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].tensor;
    auto& m = state.moments[i].first;
    auto& v = state.moments[i].second;
    const bool has_grad = p.grad.size() == p.data.size();
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double g = has_grad ? p.grad[j] : 0.0;
      p.data[j] -= lr * c.weight_decay * p.data[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

AdamW::AdamW(std::vector<NamedTensor> params, const AdamWConfig& config)
    : params_(std::move(params)), state_(make_optimizer_state(params_, config)) {}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor->grad.assign(p.tensor->numel(), 0.0);
}

void AdamW::step(double lr) { adamw_step(params_, state_, lr); }

double cosine_anneal(double lr0, std::size_t epoch, std::size_t total_epochs, double lr_min) {
  require(total_epochs > 0, ErrorCode::kInvalidArgument, "cosine_anneal: total_epochs must be > 0");
  require(epoch <= total_epochs, ErrorCode::kInvalidArgument,
          "cosine_anneal: epoch " + std::to_string(epoch) + " beyond total " +
              std::to_string(total_epochs));
  require(lr0 >= lr_min, ErrorCode::kInvalidArgument, "cosine_anneal: lr0 below lr_min");
  if (epoch == total_epochs) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(epoch) /
                       static_cast<double>(total_epochs);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

}  // namespace iqbench
