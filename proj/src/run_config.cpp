#include <cstdlib>

#include "bytes.hpp"
#include "iqbench/error.hpp"
#include "iqbench/pipeline.hpp"

namespace iqbench {

using json = nlohmann::json;

namespace {

const char* stage_name(AugmentStage s) {
  switch (s) {
    case AugmentStage::kMask: return "mask";
    case AugmentStage::kDrop: return "drop";
    case AugmentStage::kRoll: return "roll";
  }
  return "?";
}

AugmentStage parse_stage(const std::string& s) {
  if (s == "mask") return AugmentStage::kMask;
  if (s == "drop") return AugmentStage::kDrop;
  if (s == "roll") return AugmentStage::kRoll;
  fail(ErrorCode::kConfig, "unknown augmentation stage '" + s + "'");
}

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  out = j.at(key).get<T>();
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  out = j.at(key).get<T>();
}

void check_keys(const json& in, const json& tmpl, const std::string& where) {
  require(in.is_object(), ErrorCode::kConfig, where + " must be an object");
  for (const auto& [key, value] : in.items()) {
    const auto path = where.empty() ? key : where + "." + key;
    require(tmpl.contains(key), ErrorCode::kConfig, "unknown configuration key '" + path + "'");
    if (key == "policy" || key == "encoder") continue;
    if (tmpl.at(key).is_object()) check_keys(value, tmpl.at(key), path);
  }
}

json policy_json(const std::string& preset, const AugmentationPolicy& p) {
  json order = json::array();
  for (auto s : p.order) order.push_back(stage_name(s));
  return json{{"preset", preset},       {"task", task_name(p.task)}, {"cd_prob", p.cd_prob},
              {"cm_prob", p.cm_prob},   {"cm_len", p.cm_len},        {"tr_prob", p.tr_prob},
              {"tr_len", p.tr_len},     {"amp_range", p.amp_range},  {"noise_sigma", p.noise_sigma},
              {"order", order}};
}

void parse_policy(const json& j, std::string& preset, AugmentationPolicy& policy) {
  auto load_preset = [&](const std::string& name) {
    const auto p = policy_preset(name);
    require(p.has_value(), ErrorCode::kConfig,
            "unknown policy preset '" + name + "' (ssl-mod, ssl-aoa, ssl-joint)");
    preset = name;
    policy = *p;
  };
  if (j.is_string()) {
    load_preset(j.get<std::string>());
    return;
  }
  require(j.is_object(), ErrorCode::kConfig, "policy must be a preset name or an object");
  const json tmpl = policy_json("", AugmentationPolicy{});
  check_keys(j, tmpl, "policy");
  if (j.contains("preset") && !j.at("preset").is_null()) {
    auto name = j.at("preset").get<std::string>();
    name = name.substr(0, name.find('+'));
    if (name.empty() || name == "custom") {
      preset = "custom";
    } else {
      load_preset(name);
    }
  }
  const auto base = policy_json(preset, policy);
  if (j.contains("task")) {
    const auto t = parse_task(j.at("task").get<std::string>());
    require(t.has_value(), ErrorCode::kConfig, "policy.task must be aoa, mod or joint");
    policy.task = *t;
  }
  read(j, "cd_prob", policy.cd_prob);
  read(j, "cm_prob", policy.cm_prob);
  read(j, "cm_len", policy.cm_len);
  read(j, "tr_prob", policy.tr_prob);
  read(j, "tr_len", policy.tr_len);
  read(j, "amp_range", policy.amp_range);
  read(j, "noise_sigma", policy.noise_sigma);
  if (j.contains("order")) {
    policy.order.clear();
    for (const auto& s : j.at("order")) policy.order.push_back(parse_stage(s.get<std::string>()));
  }
  if (preset != "custom" && policy_json(preset, policy) != base) preset += "+overrides";
}

}  // namespace

SynthesisConfig SynthesisSection::to_config(std::uint64_t run_seed) const {
  SynthesisConfig c;
  c.geometry.antennas = antennas;
  c.geometry.spacing = spacing;
  c.geometry.wavelength = wavelength;
  c.time = time;
  c.samples_per_symbol = samples_per_symbol;
  c.snr_db = snr_db;
  c.aoa_grid_deg = aoa_grid(aoa_bins, aoa_min_deg, aoa_max_deg);
  c.gain.random_phase = random_phase;
  c.gain.magnitude_jitter = magnitude_jitter;
  c.sine_cycles_per_sample = sine_cycles_per_sample;
  c.modulations.clear();
  for (const auto& name : modulations) {
    const auto m = parse_modulation(name);
    require(m.has_value(), ErrorCode::kConfig, "unknown modulation '" + name + "'");
    c.modulations.push_back(*m);
  }
  c.seed = seed.value_or(run_seed);
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["dataset"] = dataset.string();
  j["checkpoint"] = checkpoint.string();
  j["task"] = task;
  j["policy"] = policy_json(policy_preset, policy);
  const auto& s = synthesis;
  j["synthesis"] = {{"antennas", s.antennas},
                    {"time", s.time},
                    {"samples_per_symbol", s.samples_per_symbol},
                    {"snr_db", s.snr_db},
                    {"aoa_bins", s.aoa_bins},
                    {"aoa_min_deg", s.aoa_min_deg},
                    {"aoa_max_deg", s.aoa_max_deg},
                    {"spacing", s.spacing},
                    {"wavelength", s.wavelength},
                    {"random_phase", s.random_phase},
                    {"magnitude_jitter", s.magnitude_jitter},
                    {"sine_cycles_per_sample", s.sine_cycles_per_sample},
                    {"modulations", s.modulations},
                    {"per_class", s.per_class},
                    {"train_fraction", s.train_fraction},
                    {"seed", opt_json(s.seed)}};
  j["encoder"] = encoder.to_json();
  j["ssl"] = {{"batch_size", ssl.batch_size},
              {"temperature", opt_json(ssl.temperature)},
              {"epochs", ssl.epochs},
              {"lr", opt_json(ssl.lr)},
              {"lr_min", ssl.lr_min},
              {"weight_decay", ssl.weight_decay},
              {"early_stop", ssl.early_stop},
              {"max_records", ssl.max_records}};
  j["adapt"] = {{"method", adapt.method},
                {"k", adapt.k},
                {"seed", adapt.seed},
                {"epochs", opt_json(adapt.epochs)},
                {"lr", opt_json(adapt.lr)},
                {"batch_size", adapt.batch_size},
                {"weight_decay", adapt.weight_decay},
                {"rank", adapt.rank},
                {"alpha", adapt.alpha},
                {"wrap_linear", adapt.wrap_linear},
                {"standardize", adapt.standardize}};
  j["analysis"] = {{"k_min", analysis.k_min},
                   {"k_max", analysis.k_max},
                   {"cluster_k", opt_json(analysis.cluster_k)},
                   {"pca_dims", analysis.pca_dims},
                   {"max_iter", analysis.max_iter},
                   {"anchor_seed", analysis.anchor_seed},
                   {"max_records", analysis.max_records}};
  j["sweep"] = {{"axis", sweep.axis},
                {"values", sweep.values},
                {"tr_len", sweep.tr_len},
                {"epochs", sweep.epochs},
                {"k", sweep.k}};
  j["ablate"] = {{"epochs", ablate.epochs},   {"budgets", ablate.budgets},
                 {"tr_len", ablate.tr_len},   {"tr_prob", ablate.tr_prob},
                 {"cm_len", ablate.cm_len},   {"cm_prob", ablate.cm_prob},
                 {"cd_prob", ablate.cd_prob}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  const json tmpl = c.to_json();
  check_keys(j, tmpl, "");
  try {
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    read(j, "seed", c.seed);
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
    read(j, "task", c.task);
    if (j.contains("policy")) parse_policy(j.at("policy"), c.policy_preset, c.policy);
    if (j.contains("synthesis")) {
      const auto& s = j.at("synthesis");
      auto& o = c.synthesis;
      read(s, "antennas", o.antennas);
      read(s, "time", o.time);
      read(s, "samples_per_symbol", o.samples_per_symbol);
      read(s, "snr_db", o.snr_db);
      read(s, "aoa_bins", o.aoa_bins);
      read(s, "aoa_min_deg", o.aoa_min_deg);
      read(s, "aoa_max_deg", o.aoa_max_deg);
      read(s, "spacing", o.spacing);
      read(s, "wavelength", o.wavelength);
      read(s, "random_phase", o.random_phase);
      read(s, "magnitude_jitter", o.magnitude_jitter);
      read(s, "sine_cycles_per_sample", o.sine_cycles_per_sample);
      read(s, "modulations", o.modulations);
      read(s, "per_class", o.per_class);
      read(s, "train_fraction", o.train_fraction);
      read(s, "seed", o.seed);
    }
    if (j.contains("encoder")) {
      json merged = c.encoder.to_json();
      require(j.at("encoder").is_object(), ErrorCode::kConfig, "encoder must be an object");
      for (const auto& [key, value] : j.at("encoder").items()) {
        require(merged.contains(key), ErrorCode::kConfig,
                "unknown configuration key 'encoder." + key + "'");
        merged[key] = value;
      }
      if (j.at("encoder").contains("widths") && !j.at("encoder").contains("strides")) {
        merged["strides"] = std::vector<std::size_t>(merged["widths"].size(), 2);
      }
      c.encoder = EncoderConfig::from_json(merged);
    }
    if (j.contains("ssl")) {
      const auto& s = j.at("ssl");
      read(s, "batch_size", c.ssl.batch_size);
      read(s, "temperature", c.ssl.temperature);
      read(s, "epochs", c.ssl.epochs);
      read(s, "lr", c.ssl.lr);
      read(s, "lr_min", c.ssl.lr_min);
      read(s, "weight_decay", c.ssl.weight_decay);
      read(s, "early_stop", c.ssl.early_stop);
      read(s, "max_records", c.ssl.max_records);
    }
    if (j.contains("adapt")) {
      const auto& s = j.at("adapt");
      read(s, "method", c.adapt.method);
      read(s, "k", c.adapt.k);
      read(s, "seed", c.adapt.seed);
      read(s, "epochs", c.adapt.epochs);
      read(s, "lr", c.adapt.lr);
      read(s, "batch_size", c.adapt.batch_size);
      read(s, "weight_decay", c.adapt.weight_decay);
      read(s, "rank", c.adapt.rank);
      read(s, "alpha", c.adapt.alpha);
      read(s, "wrap_linear", c.adapt.wrap_linear);
      read(s, "standardize", c.adapt.standardize);
    }
    if (j.contains("analysis")) {
      const auto& s = j.at("analysis");
      read(s, "k_min", c.analysis.k_min);
      read(s, "k_max", c.analysis.k_max);
      read(s, "cluster_k", c.analysis.cluster_k);
      read(s, "pca_dims", c.analysis.pca_dims);
      read(s, "max_iter", c.analysis.max_iter);
      read(s, "anchor_seed", c.analysis.anchor_seed);
      read(s, "max_records", c.analysis.max_records);
    }
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      read(s, "axis", c.sweep.axis);
      read(s, "values", c.sweep.values);
      read(s, "tr_len", c.sweep.tr_len);
      read(s, "epochs", c.sweep.epochs);
      read(s, "k", c.sweep.k);
    }
    if (j.contains("ablate")) {
      const auto& s = j.at("ablate");
      read(s, "epochs", c.ablate.epochs);
      read(s, "budgets", c.ablate.budgets);
      read(s, "tr_len", c.ablate.tr_len);
      read(s, "tr_prob", c.ablate.tr_prob);
      read(s, "cm_len", c.ablate.cm_len);
      read(s, "cm_prob", c.ablate.cm_prob);
      read(s, "cd_prob", c.ablate.cd_prob);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("configuration: ") + e.what());
  }
  require(c.adapt.method == "probe" || c.adapt.method == "lora" || c.adapt.method == "supervised",
          ErrorCode::kConfig, "adapt.method must be probe, lora or supervised");
  require(c.sweep.axis == "cd_prob" || c.sweep.axis == "cm_prob", ErrorCode::kConfig,
          "sweep.axis must be cd_prob or cm_prob");
  require(c.analysis.k_min >= 2 && c.analysis.k_min <= c.analysis.k_max, ErrorCode::kConfig,
          "analysis needs 2 <= k_min <= k_max");
  c.policy.validate(c.synthesis.time);
  return c;
}

std::filesystem::path RunConfig::dataset_path() const {
  return dataset.empty() ? output_dir / "dataset.iqds" : dataset;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? output_dir / "encoder.iqck" : checkpoint;
}

std::string RunConfig::label_field() const {
  if (task == "mod") return "modulation";
  if (task == "aoa") return "aoa_bin";
  return task;
}

SslConfig RunConfig::ssl_config() const {
  SslConfig s;
  const auto base = ssl_preset(policy.task);
  s.policy = policy;
  s.batch_size = ssl.batch_size;
  s.temperature = ssl.temperature.value_or(base.temperature);
  s.epochs = ssl.epochs;
  s.lr = ssl.lr.value_or(base.lr);
  s.lr_min = ssl.lr_min;
  s.weight_decay = ssl.weight_decay;
  s.early_stop = ssl.early_stop;
  s.seed = derive_seed(seed, 2);
  return s;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace iqbench
