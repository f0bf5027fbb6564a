#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "iqbench/adapt.hpp"
#include "iqbench/augment.hpp"
#include "iqbench/encoder.hpp"
#include "iqbench/signal.hpp"
#include "iqbench/ssl.hpp"

namespace iqbench {

struct SynthesisSection {
  std::size_t antennas = 4;
  std::size_t time = 256;
  std::size_t samples_per_symbol = 8;
  double snr_db = 10.0;
  std::size_t aoa_bins = 15;
  double aoa_min_deg = -70.0;
  double aoa_max_deg = 70.0;
  double spacing = 0.5;
  double wavelength = 1.0;
  bool random_phase = false;
  double magnitude_jitter = 0.0;
  double sine_cycles_per_sample = 0.05;
  std::vector<std::string> modulations{"BPSK", "QPSK", "QAM16", "QAM64", "PAM4", "SINE", "CW"};
  std::size_t per_class = 10;
  double train_fraction = 0.7;
  std::optional<std::uint64_t> seed;  // defaults to the run seed

  SynthesisConfig to_config(std::uint64_t run_seed) const;
};

struct SslSection {
  std::size_t batch_size = 64;
  std::optional<double> temperature;  // preset value when unset
  std::size_t epochs = 20;
  std::optional<double> lr;           // preset value when unset
  double lr_min = kDefaultMinLearningRate;
  double weight_decay = 1e-2;
  bool early_stop = false;
  std::size_t max_records = 0;        // 0: whole training partition
};

struct AdaptSection {
  std::string method = "probe";  // probe | lora | supervised
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::size_t batch_size = 32;
  double weight_decay = 1e-2;
  std::size_t rank = 1;
  double alpha = 10.0;
  bool wrap_linear = false;
  bool standardize = true;
};

struct AnalysisSection {
  std::size_t k_min = 2;
  std::size_t k_max = 12;
  std::optional<std::size_t> cluster_k;  // class count of each field when unset
  std::size_t pca_dims = 2;
  std::size_t max_iter = 100;
  std::uint64_t anchor_seed = 0;
  std::size_t max_records = 0;  // 0: every record
};

struct SweepSection {
  std::string axis = "cd_prob";  // cd_prob | cm_prob
  std::vector<double> values{0.01, 0.5, 0.9};
  std::vector<std::size_t> tr_len{20, 40, 60};
  std::size_t epochs = 20;
  std::size_t k = 50;
};

struct AblateSection {
  std::size_t epochs = 10;
  std::vector<std::size_t> budgets{10, 100, 200};
  std::size_t tr_len = 40;
  double tr_prob = 0.8;
  std::size_t cm_len = 200;
  double cm_prob = 0.95;
  double cd_prob = 1.0;
};

/// Everything a CLI command needs. Parsed from JSON; unknown keys are
/// rejected at every level.
struct RunConfig {
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  std::filesystem::path dataset;     // default <output_dir>/dataset.iqds
  std::filesystem::path checkpoint;  // default <output_dir>/encoder.iqck
  std::string task = "mod";          // mod | aoa | any label field name
  std::string policy_preset = "ssl-mod";
  AugmentationPolicy policy = iqbench::policy_preset(Task::kMod);
  SynthesisSection synthesis;
  EncoderConfig encoder;
  SslSection ssl;
  AdaptSection adapt;
  AnalysisSection analysis;
  SweepSection sweep;
  AblateSection ablate;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  std::filesystem::path dataset_path() const;
  std::filesystem::path checkpoint_path() const;
  std::string label_field() const;
  SslConfig ssl_config() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Each command writes its outputs plus <command>.config.json (the resolved
// configuration) under output_dir and returns a JSON summary.
nlohmann::json cmd_gen(const RunConfig& config);
nlohmann::json cmd_pretrain(const RunConfig& config);
nlohmann::json cmd_adapt(const RunConfig& config);
nlohmann::json cmd_sweep(const RunConfig& config);
nlohmann::json cmd_cluster(const RunConfig& config);
nlohmann::json cmd_ablate(const RunConfig& config);
nlohmann::json cmd_report(const RunConfig& config);

nlohmann::json run_command(const std::string& command, const RunConfig& config);

}  // namespace iqbench
