#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "iqbench/autograd.hpp"
#include "iqbench/rng.hpp"
#include "iqbench/signal.hpp"
#include "iqbench/tensor.hpp"

namespace test {

using namespace iqbench;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data) v = uniform(rng, lo, hi);
  return t;
}

// Builds the scalar loss on a fresh tape from the bound parameters.
using LossFn = std::function<Var(Tape&, std::vector<Var>&)>;

inline double eval_loss(const LossFn& f, std::vector<Tensor*>& params) {
  Tape tape;
  std::vector<Var> vars;
  for (auto* p : params) vars.push_back(tape.parameter(*p));
  return tape.value(f(tape, vars)).item();
}

// Largest relative error ||g - g_fd|| / max(||g||, ||g_fd||) over the
// parameter tensors, central differences with step eps.
inline double gradient_error(const LossFn& f, std::vector<Tensor*> params, double eps = 1e-4) {
  for (auto* p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  {
    Tape tape;
    std::vector<Var> vars;
    for (auto* p : params) vars.push_back(tape.parameter(*p));
    tape.backward(f(tape, vars));
  }
  double worst = 0.0;
  for (auto* p : params) {
    const auto analytic = p->grad;
    std::vector<double> numeric(p->numel());
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double keep = p->data[i];
      p->data[i] = keep + eps;
      const double up = eval_loss(f, params);
      p->data[i] = keep - eps;
      const double down = eval_loss(f, params);
      p->data[i] = keep;
      numeric[i] = (up - down) / (2.0 * eps);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale > 0.0) worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

// Reduces any output to a scalar with fixed random weights.
inline Var weighted_sum(Tape& tape, Var out, Rng& rng) {
  const auto& v = tape.value(out);
  return sum(tape, mul(tape, out, tape.constant(random_tensor(v.shape, rng))));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("iqbench_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace test
