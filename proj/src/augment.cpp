#include "iqbench/augment.hpp"

#include <algorithm>
#include <cmath>

#include "iqbench/error.hpp"

namespace iqbench {

const char* task_name(Task task) {
  switch (task) {
    case Task::kAoa: return "aoa";
    case Task::kMod: return "mod";
    case Task::kJoint: return "joint";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view name) {
  if (name == "aoa") return Task::kAoa;
  if (name == "mod") return Task::kMod;
  if (name == "joint") return Task::kJoint;
  return std::nullopt;
}

void AugmentationPolicy::validate(std::size_t time) const {
  auto prob = [](double p, const char* what) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidArgument,
            std::string(what) + " must lie in [0, 1]");
  };
  prob(cd_prob, "cd_prob");
  prob(cm_prob, "cm_prob");
  prob(tr_prob, "tr_prob");
  require(cm_len <= time, ErrorCode::kInvalidArgument,
          "cm_len " + std::to_string(cm_len) + " exceeds record length " + std::to_string(time));
  require(tr_len <= time, ErrorCode::kInvalidArgument,
          "tr_len " + std::to_string(tr_len) + " exceeds record length " + std::to_string(time));
  require(amp_range >= 0.0 && amp_range < 1.0, ErrorCode::kInvalidArgument,
          "amp_range must lie in [0, 1)");
  require(noise_sigma >= 0.0, ErrorCode::kInvalidArgument, "noise_sigma must be >= 0");
}

AugmentationPolicy policy_preset(Task task) {
  AugmentationPolicy p;
  p.task = task;
  switch (task) {
    case Task::kMod:
      p.cd_prob = 1.00; p.cm_len = 0; p.cm_prob = 0.00; p.tr_len = 40; p.tr_prob = 0.80;
      break;
    case Task::kAoa:
      p.cd_prob = 0.00; p.cm_len = 200; p.cm_prob = 0.95; p.tr_len = 120; p.tr_prob = 0.95;
      break;
    case Task::kJoint:
      p.cd_prob = 0.45; p.cm_len = 40; p.cm_prob = 0.97; p.tr_len = 20; p.tr_prob = 0.95;
      break;
  }
  return p;
}

std::optional<AugmentationPolicy> policy_preset(std::string_view name) {
  if (name == "ssl-mod") return policy_preset(Task::kMod);
  if (name == "ssl-aoa") return policy_preset(Task::kAoa);
  if (name == "ssl-joint") return policy_preset(Task::kJoint);
  return std::nullopt;
}

IQTensor time_roll(const IQTensor& x, std::size_t tau, int dir) {
  require(tau < x.time, ErrorCode::kInvalidArgument,
          "time_roll: tau " + std::to_string(tau) + " must be below T = " + std::to_string(x.time));
  require(dir == 1 || dir == -1, ErrorCode::kInvalidArgument, "time_roll: dir must be +1 or -1");
  IQTensor out(x.antennas, x.time);
  const auto T = x.time;
  const std::size_t shift = dir > 0 ? tau : (T - tau) % T;
  for (std::size_t row = 0; row < x.antennas * 2; ++row) {
    const double* src = x.values.data() + row * T;
    double* dst = out.values.data() + row * T;
    for (std::size_t t = 0; t < T; ++t) dst[t] = src[(t + shift) % T];
  }
  return out;
}

IQTensor channel_mask(const IQTensor& x, std::span<const std::uint8_t> mask) {
  require(mask.size() == x.time, ErrorCode::kShapeMismatch,
          "channel_mask: mask length " + std::to_string(mask.size()) + " != T = " +
              std::to_string(x.time));
  for (auto v : mask) {
    require(v <= 1, ErrorCode::kInvalidArgument, "channel_mask: mask entries must be 0 or 1");
  }
  IQTensor out = x;
  for (std::size_t row = 0; row < x.antennas * 2; ++row) {
    double* dst = out.values.data() + row * x.time;
    for (std::size_t t = 0; t < x.time; ++t) {
      if (mask[t] == 0) dst[t] = 0.0;
    }
  }
  return out;
}

IQTensor channel_drop(const IQTensor& x, std::span<const std::size_t> dropped) {
  std::vector<bool> hit(x.antennas, false);
  for (auto m : dropped) {
    require(m < x.antennas, ErrorCode::kInvalidArgument,
            "channel_drop: antenna " + std::to_string(m) + " out of range");
    hit[m] = true;
  }
  const auto n_hit = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
  require(n_hit < x.antennas, ErrorCode::kInvalidArgument,
          "channel_drop: cannot drop every antenna");
  IQTensor out = x;
  for (std::size_t m = 0; m < x.antennas; ++m) {
    if (!hit[m]) continue;
    auto first = out.values.begin() + static_cast<std::ptrdiff_t>(m * 2 * x.time);
    std::fill(first, first + static_cast<std::ptrdiff_t>(2 * x.time), 0.0);
  }
  return out;
}

IQTensor amplitude_scale(const IQTensor& x, double s) {
  IQTensor out = x;
  const double f = 1.0 + s;
  for (auto& v : out.values) v *= f;
  return out;
}

IQTensor add_noise(const IQTensor& x, double sigma, Rng& rng) {
  require(sigma >= 0.0, ErrorCode::kInvalidArgument, "add_noise: sigma must be >= 0");
  IQTensor out = x;
  if (sigma == 0.0) return out;
  for (auto& v : out.values) v += sigma * standard_normal(rng);
  return out;
}

IQTensor augment_view(const IQTensor& x, const AugmentationPolicy& policy, Rng& rng,
                      ViewTrace* trace) {
  ViewTrace local;
  ViewTrace& tr = trace ? *trace : local;
  tr = ViewTrace{};
  IQTensor v = x;
  const auto T = x.time;
  for (auto stage : policy.order) {
    switch (stage) {
      case AugmentStage::kMask: {
        const double p = policy.effective_cm_prob();
        if (p <= 0.0 || policy.cm_len == 0 || uniform01(rng) >= p) break;
        const auto len = uniform_index(rng, 1, std::min(policy.cm_len, T));
        const auto offset = uniform_index(rng, 0, T - len);
        std::vector<std::uint8_t> mask(T, 1);
        std::fill(mask.begin() + static_cast<std::ptrdiff_t>(offset),
                  mask.begin() + static_cast<std::ptrdiff_t>(offset + len), 0);
        v = channel_mask(v, mask);
        tr.masked = true;
        tr.mask_offset = offset;
        tr.mask_length = len;
        break;
      }
      case AugmentStage::kDrop: {
        const double p = policy.effective_cd_prob();
        if (p <= 0.0 || x.antennas < 2 || uniform01(rng) >= p) break;
        // Uniform over nonempty strict subsets, encoded as bitmasks.
        const std::uint64_t full = (std::uint64_t{1} << x.antennas) - 1;
        const auto bits = uniform_index(rng, 1, full - 1);
        std::vector<std::size_t> rows;
        for (std::size_t m = 0; m < x.antennas; ++m) {
          if (bits & (std::uint64_t{1} << m)) rows.push_back(m);
        }
        v = channel_drop(v, rows);
        tr.dropped = true;
        tr.dropped_antennas = std::move(rows);
        break;
      }
      case AugmentStage::kRoll: {
        const auto max_tau = std::min(policy.tr_len, T - 1);
        if (policy.tr_prob <= 0.0 || max_tau == 0 || uniform01(rng) >= policy.tr_prob) break;
        const auto tau = uniform_index(rng, 1, max_tau);
        const int dir = uniform_index(rng, 0, 1) == 0 ? -1 : 1;
        v = time_roll(v, tau, dir);
        tr.rolled = true;
        tr.roll_tau = tau;
        tr.roll_dir = dir;
        break;
      }
    }
  }
  if (policy.amp_range > 0.0) {
    tr.scale = uniform(rng, -policy.amp_range, policy.amp_range);
    v = amplitude_scale(v, tr.scale);
  }
  if (policy.noise_sigma > 0.0) v = add_noise(v, policy.noise_sigma, rng);
  return v;
}

std::pair<IQTensor, IQTensor> sample_views(const IQTensor& x, const AugmentationPolicy& policy,
                                           Rng& rng, ViewTrace* trace1, ViewTrace* trace2) {
  policy.validate(x.time);
  auto a = augment_view(x, policy, rng, trace1);
  auto b = augment_view(x, policy, rng, trace2);
  return {std::move(a), std::move(b)};
}

}  // namespace iqbench
