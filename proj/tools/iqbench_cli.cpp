// iqbench command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iqbench/iqbench.h"

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::optional<std::string> task;
  std::optional<std::string> policy;
  std::optional<std::size_t> epochs;
  std::optional<std::string> method;
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> adapt_seed;
  std::optional<std::size_t> classes_aoa;
  std::optional<std::size_t> per_class;
  std::optional<std::string> axis;
  std::vector<std::string> sets;
  bool print_config = false;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config_path, "JSON run configuration");
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("-o,--output", o.output, "output directory");
  sub->add_option("--dataset", o.dataset, "dataset path");
  sub->add_option("--checkpoint", o.checkpoint, "encoder checkpoint path");
  sub->add_option("--task", o.task, "label field: mod, aoa or a field name");
  sub->add_option("--policy", o.policy, "augmentation preset: ssl-mod, ssl-aoa, ssl-joint");
  sub->add_option("--epochs", o.epochs, "epochs for this command's training stage");
  sub->add_option("--set", o.sets, "override any key: section.key=JSON")->take_all();
  sub->add_flag("--print-config", o.print_config, "print the resolved configuration and exit");
}

struct Failure {
  iqb_status status;
};

void check(iqb_status s) {
  if (s != IQB_OK) throw Failure{s};
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void set(iqb_config* cfg, const std::string& key, const std::string& json_value) {
  check(iqb_config_set(cfg, key.c_str(), json_value.c_str()));
}

void apply(iqb_config* cfg, const std::string& command, const Options& o) {
  if (o.seed) set(cfg, "seed", std::to_string(*o.seed));
  if (o.output) set(cfg, "output_dir", quote(*o.output));
  if (const char* root = std::getenv("IQBENCH_OUTPUT_ROOT"); root && *root) {
    char* text = nullptr;
    check(iqb_config_get(cfg, "output_dir", &text));
    std::string current = text;
    iqb_string_free(text);
    current = current.substr(1, current.size() - 2);
    if (std::filesystem::path(current).is_relative()) {
      set(cfg, "output_dir", quote((std::filesystem::path(root) / current).string()));
    }
  }
  if (o.dataset) set(cfg, "dataset", quote(*o.dataset));
  if (o.checkpoint) set(cfg, "checkpoint", quote(*o.checkpoint));
  if (o.task) set(cfg, "task", quote(*o.task));
  if (o.policy) set(cfg, "policy", quote(*o.policy));
  if (o.epochs) {
    static const std::map<std::string, std::string> target{
        {"pretrain", "ssl.epochs"}, {"adapt", "adapt.epochs"}, {"sweep", "sweep.epochs"},
        {"ablate", "ablate.epochs"}, {"cluster", "ssl.epochs"}, {"gen", "ssl.epochs"},
        {"report", "ssl.epochs"}};
    set(cfg, target.at(command), std::to_string(*o.epochs));
  }
  if (o.method) set(cfg, "adapt.method", quote(*o.method));
  if (o.k) set(cfg, command == "sweep" ? "sweep.k" : "adapt.k", std::to_string(*o.k));
  if (o.adapt_seed) set(cfg, "adapt.seed", std::to_string(*o.adapt_seed));
  if (o.classes_aoa) set(cfg, "synthesis.aoa_bins", std::to_string(*o.classes_aoa));
  if (o.per_class) set(cfg, "synthesis.per_class", std::to_string(*o.per_class));
  if (o.axis) set(cfg, "sweep.axis", quote(*o.axis));
  std::vector<std::string> keys, values;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "iqbench: --set expects key=value, got '%s'\n", s.c_str());
      throw Failure{IQB_ERR_CONFIG};
    }
    keys.push_back(s.substr(0, eq));
    values.push_back(s.substr(eq + 1));
  }
  std::vector<const char*> kp, vp;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    kp.push_back(keys[i].c_str());
    vp.push_back(values[i].c_str());
  }
  check(iqb_config_set_many(cfg, kp.data(), vp.data(), kp.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iqbench: self-supervised IQ representation experiments"};
  app.set_version_flag("--version", std::string(iqb_version()));
  app.require_subcommand(1);
  Options o;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "synthesize a labelled dataset and its split manifest"},
      {"pretrain", "contrastive pretraining; writes a checkpoint and loss CSV"},
      {"adapt", "few-shot probe, LoRA or supervised training; writes metrics JSON"},
      {"sweep", "augmentation strength grid; writes a CSV surface"},
      {"cluster", "silhouette sweep, pseudo-labels and PCA of embeddings"},
      {"ablate", "augmentation on/off grid across label budgets"},
      {"report", "collect metrics and digests of an output directory"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    if (name == "gen") {
      sub->add_option("--classes-aoa", o.classes_aoa, "number of azimuth bins");
      sub->add_option("--per-class", o.per_class, "records per (modulation, azimuth) class");
    }
    if (name == "adapt") {
      sub->add_option("--method", o.method, "probe | lora | supervised");
      sub->add_option("--k", o.k, "labelled records per class");
      sub->add_option("--adapt-seed", o.adapt_seed, "few-shot split and head seed");
    }
    if (name == "sweep") {
      sub->add_option("--axis", o.axis, "cd_prob | cm_prob");
      sub->add_option("--k", o.k, "probe records per class");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  iqb_config* cfg = nullptr;
  int rc = 0;
  try {
    if (o.config_path.empty()) {
      check(iqb_config_new(&cfg));
    } else {
      check(iqb_config_load(o.config_path.c_str(), &cfg));
    }
    apply(cfg, command, o);
    if (o.print_config) {
      char* text = nullptr;
      check(iqb_config_to_json(cfg, &text));
      std::cout << text << "\n";
      iqb_string_free(text);
    } else {
      char* result = nullptr;
      check(iqb_run(cfg, command.c_str(), &result));
      std::cout << result << "\n";
      iqb_string_free(result);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "iqbench %s: %s: %s\n", command.c_str(), iqb_status_name(f.status),
                 iqb_last_error());
    rc = iqb_exit_code(f.status);
  }
  iqb_config_free(cfg);
  return rc;
}
