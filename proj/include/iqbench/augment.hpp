#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "iqbench/rng.hpp"
#include "iqbench/signal.hpp"

namespace iqbench {

enum class Task { kAoa, kMod, kJoint };

const char* task_name(Task task);
std::optional<Task> parse_task(std::string_view name);

enum class AugmentStage { kMask, kDrop, kRoll };

/// Probabilities and magnitudes of the view-generating transformations.
///
/// The task gates the structural augmentations: masking never runs for
/// Task::kMod and dropping never runs for Task::kAoa, whatever the stored
/// probabilities say. Scaling and noise follow the structural stages.
struct AugmentationPolicy {
  double cd_prob = 0.0;
  double cm_prob = 0.0;
  std::size_t cm_len = 0;
  double tr_prob = 0.0;
  std::size_t tr_len = 0;
  double amp_range = 0.1;
  double noise_sigma = 0.09;
  Task task = Task::kJoint;
  std::vector<AugmentStage> order{AugmentStage::kMask, AugmentStage::kDrop, AugmentStage::kRoll};

  double effective_cd_prob() const { return task == Task::kAoa ? 0.0 : cd_prob; }
  double effective_cm_prob() const { return task == Task::kMod ? 0.0 : cm_prob; }

  void validate(std::size_t time) const;
};

// Column values of the SSL-Mod / SSL-AoA / SSL-Joint encoders.
AugmentationPolicy policy_preset(Task task);
std::optional<AugmentationPolicy> policy_preset(std::string_view name);  // "ssl-mod", ...

// out(t) = x((t + dir * tau) mod T) on every antenna and I/Q channel.
IQTensor time_roll(const IQTensor& x, std::size_t tau, int dir);
// out(m, c, t) = mask(t) * x(m, c, t); mask entries must be 0 or 1.
IQTensor channel_mask(const IQTensor& x, std::span<const std::uint8_t> mask);
// Zeroes the listed antenna rows (0-based); at least one row must survive.
IQTensor channel_drop(const IQTensor& x, std::span<const std::size_t> dropped);
// out = (1 + s) * x
IQTensor amplitude_scale(const IQTensor& x, double s);
IQTensor add_noise(const IQTensor& x, double sigma, Rng& rng);

// What sample_views actually did to one view.
struct ViewTrace {
  bool masked = false;
  std::size_t mask_offset = 0;
  std::size_t mask_length = 0;
  bool dropped = false;
  std::vector<std::size_t> dropped_antennas;
  bool rolled = false;
  std::size_t roll_tau = 0;
  int roll_dir = 0;
  double scale = 0.0;
};

IQTensor augment_view(const IQTensor& x, const AugmentationPolicy& policy, Rng& rng,
                      ViewTrace* trace = nullptr);

std::pair<IQTensor, IQTensor> sample_views(const IQTensor& x, const AugmentationPolicy& policy,
                                           Rng& rng, ViewTrace* trace1 = nullptr,
                                           ViewTrace* trace2 = nullptr);

}  // namespace iqbench
