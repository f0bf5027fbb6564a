#include "iqbench/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "bytes.hpp"
#include "iqbench/analysis.hpp"
#include "iqbench/digest.hpp"
#include "iqbench/error.hpp"
#include "iqbench/generate.hpp"

namespace iqbench {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& j) { detail::write_file(path, j.dump(2) + "\n"); }

void echo_config(const RunConfig& config, const std::string& command) {
  write_json(config.output_dir / (command + ".config.json"), config.to_json());
}

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.precision(10);
  return out;
}

struct LoadedData {
  IQDataset dataset;
  SplitManifest split;
};

LoadedData load_data(const RunConfig& config) {
  LoadedData d;
  const auto path = config.dataset_path();
  d.dataset = read_dataset(path);
  const auto split_path = split_path_for(path);
  if (fs::exists(split_path)) {
    d.split = read_split(split_path);
  } else {
    // Imported sets carry no manifest; derive the stratified split from the
    // first label field.
    std::vector<int> cls(d.dataset.count, 0);
    if (!d.dataset.label_fields.empty()) cls = d.dataset.label_column(d.dataset.label_fields.front());
    d.split = stratified_split(cls, config.synthesis.train_fraction, config.seed);
  }
  for (auto i : d.split.train) {
    require(i < d.dataset.count, ErrorCode::kHeaderMismatch, "split manifest index out of range");
  }
  for (auto i : d.split.test) {
    require(i < d.dataset.count, ErrorCode::kHeaderMismatch, "split manifest index out of range");
  }
  return d;
}

std::size_t class_count(std::span<const int> labels) {
  int mx = -1;
  for (int y : labels) mx = std::max(mx, y);
  return static_cast<std::size_t>(mx + 1);
}

Encoder load_encoder(const RunConfig& config) {
  return Encoder::from_checkpoint(read_checkpoint(config.checkpoint_path()));
}

EncoderConfig encoder_config_for(const RunConfig& config, const IQDataset& ds) {
  auto ec = config.encoder;
  ec.antennas = std::max(ec.antennas, ds.antennas);
  ec.time = ds.time;
  ec.validate();
  return ec;
}

std::vector<std::size_t> pretrain_indices(const RunConfig& config, const SplitManifest& split) {
  std::vector<std::size_t> idx = split.train;
  if (config.ssl.max_records > 0 && config.ssl.max_records < idx.size()) {
    auto rng = make_rng(config.seed, 0x5ab5e7);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(config.ssl.max_records);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

// Few-shot linear-probe accuracy of `encoder` on `labels`.
double probe_accuracy(Encoder& encoder, const IQDataset& ds, const SplitManifest& split,
                      const std::vector<int>& labels, std::size_t k, std::uint64_t seed,
                      const TrainOptions& options, bool standardize, const Tensor* cached = nullptr) {
  const auto fs_split = few_shot_split(labels, split.train, split.test, k, seed);
  std::vector<std::size_t> all(ds.count);
  for (std::size_t i = 0; i < ds.count; ++i) all[i] = i;
  const Tensor h = cached ? *cached : embed_dataset(encoder, ds, all);
  const auto d = h.shape[1];
  auto gather = [&](const std::vector<std::size_t>& idx, std::vector<int>& y) {
    Tensor out({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::copy(h.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * d),
                h.data.begin() + static_cast<std::ptrdiff_t>((idx[r] + 1) * d),
                out.data.begin() + static_cast<std::ptrdiff_t>(r * d));
      y.push_back(labels[idx[r]]);
    }
    return out;
  };
  std::vector<int> ytr, yte;
  const auto xtr = gather(fs_split.train, ytr);
  const auto xte = gather(fs_split.test, yte);
  auto opts = options;
  opts.seed = seed;
  const auto head = train_linear_probe(xtr, ytr, class_count(labels), opts, nullptr, standardize);
  return evaluate(head.predict(xte), yte, class_count(labels)).accuracy;
}

}  // namespace

json cmd_gen(const RunConfig& config) {
  echo_config(config, "gen");
  const auto sc = config.synthesis.to_config(config.seed);
  const auto path = config.dataset_path();
  const auto g = build_dataset_file(sc, config.synthesis.per_class, path, config.synthesis.train_fraction);
  return json{{"command", "gen"},
              {"dataset", path.string()},
              {"split", split_path_for(path).string()},
              {"records", g.dataset.count},
              {"classes", sc.modulations.size() * sc.grid().size()},
              {"train", g.split.train.size()},
              {"test", g.split.test.size()},
              {"digest", hex_digest(file_digest(path))}};
}

json cmd_pretrain(const RunConfig& config) {
  echo_config(config, "pretrain");
  const auto data = load_data(config);
  Encoder encoder(encoder_config_for(config, data.dataset), derive_seed(config.seed, 1));
  const auto ssl = config.ssl_config();
  const auto idx = pretrain_indices(config, data.split);
  const auto result = pretrain(encoder, data.dataset, idx, ssl);
  const auto ck_path = config.checkpoint_path();
  auto ck = encoder.to_checkpoint();
  ck.meta["ssl"] = {{"policy", config.policy_preset},
                    {"temperature", ssl.temperature},
                    {"lr", ssl.lr},
                    {"epochs", ssl.epochs},
                    {"batch_size", ssl.batch_size},
                    {"seed", ssl.seed}};
  write_checkpoint(ck, ck_path);
  const auto loss_path = config.output_dir / "pretrain_loss.csv";
  write_loss_csv(result.trace, loss_path);
  json trace = json::array();
  for (const auto& s : result.trace) trace.push_back(s.mean_loss);
  return json{{"command", "pretrain"},
              {"checkpoint", ck_path.string()},
              {"loss_csv", loss_path.string()},
              {"epochs_run", result.trace.size()},
              {"stopped_early", result.stopped_early},
              {"loss", trace},
              {"parameters", encoder.parameter_count()},
              {"digest", hex_digest(file_digest(ck_path))}};
}

json cmd_adapt(const RunConfig& config) {
  echo_config(config, "adapt");
  const auto data = load_data(config);
  const auto& ds = data.dataset;
  const auto field = config.label_field();
  const auto labels = ds.label_column(field);
  const auto classes = class_count(labels);
  const auto& a = config.adapt;

  const auto split_file = config.output_dir / ("fewshot_" + field + "_k" + std::to_string(a.k) +
                                               "_s" + std::to_string(a.seed) + ".json");
  const auto fresh = few_shot_split(labels, data.split.train, data.split.test, a.k, a.seed);
  if (fs::exists(split_file)) {
    const auto existing = read_few_shot_split(split_file);
    require(existing.train == fresh.train && existing.test == fresh.test, ErrorCode::kConfig,
            "few-shot manifest " + split_file.string() + " does not match this dataset");
  } else {
    write_few_shot_split(fresh, split_file);
  }
  const auto split = read_few_shot_split(split_file);

  std::vector<int> ytest;
  for (auto i : split.test) ytest.push_back(labels[i]);

  TrainOptions opts = a.method == "probe" ? probe_defaults()
                      : a.method == "lora" ? lora_defaults()
                                           : supervised_defaults();
  if (a.epochs) opts.epochs = *a.epochs;
  if (a.lr) opts.lr = *a.lr;
  opts.batch_size = a.batch_size;
  opts.weight_decay = a.weight_decay;
  opts.seed = a.seed;

  AdaptMetrics m;
  m.task = field;
  m.k = a.k;
  m.seed = a.seed;
  m.method = a.method;
  json extra;
  Evaluation ev;
  if (a.method == "probe") {
    auto encoder = load_encoder(config);
    const auto before = encoder.digest();
    const auto htr = embed_dataset(encoder, ds, split.train);
    const auto hte = embed_dataset(encoder, ds, split.test);
    std::vector<int> ytr;
    for (auto i : split.train) ytr.push_back(labels[i]);
    TrainResult tr;
    const auto head = train_linear_probe(htr, ytr, classes, opts, &tr, a.standardize);
    ev = evaluate(head.predict(hte), ytest, classes);
    m.params_trainable = tr.params_trainable;
    require(encoder.digest() == before, ErrorCode::kNumeric, "probe modified the frozen encoder");
    extra["encoder_digest"] = hex_digest(before);
    extra["train_loss"] = tr.epoch_loss;
  } else if (a.method == "lora") {
    auto encoder = load_encoder(config);
    const auto before = encoder.digest();
    LoraConfig lc;
    lc.rank = a.rank;
    lc.alpha = a.alpha;
    lc.wrap_linear = a.wrap_linear;
    auto stack = lora_wrap(encoder, lc, derive_seed(a.seed, 3));
    auto model = make_classifier(encoder, &stack, classes, derive_seed(a.seed, 4));
    const auto tr = train_lora(model, ds, split.train, labels, opts);
    ev = evaluate(model.predict(ds, split.test), ytest, classes);
    m.params_trainable = tr.params_trainable;
    auto ck = stack.to_checkpoint();
    ck.meta["head_classes"] = classes;
    ck.entries.push_back({"head.weight", Tensor(model.head_weight.shape, model.head_weight.data)});
    ck.entries.push_back({"head.bias", Tensor(model.head_bias.shape, model.head_bias.data)});
    const auto ad_path = config.output_dir / ("adapter_" + field + "_k" + std::to_string(a.k) +
                                              "_s" + std::to_string(a.seed) + ".iqck");
    write_checkpoint(ck, ad_path);
    extra["adapter"] = ad_path.string();
    extra["encoder_digest"] = hex_digest(before);
    extra["encoder_unchanged"] = encoder.digest() == before;
    extra["train_loss"] = tr.epoch_loss;
  } else {
    Encoder encoder(encoder_config_for(config, ds), derive_seed(a.seed, 5));
    auto model = make_classifier(encoder, nullptr, classes, derive_seed(a.seed, 4));
    const auto tr = train_supervised_baseline(model, ds, split.train, labels, opts);
    ev = evaluate(model.predict(ds, split.test), ytest, classes);
    m.params_trainable = tr.params_trainable;
    extra["train_loss"] = tr.epoch_loss;
  }
  m.accuracy = ev.accuracy;
  auto out = m.to_json();
  out["confusion"] = ev.confusion;
  out["split"] = split_file.string();
  out["epochs"] = opts.epochs;
  out["lr"] = opts.lr;
  for (const auto& [k, v] : extra.items()) out[k] = v;
  const auto metrics_path = config.output_dir / ("metrics_" + a.method + "_" + field + "_k" +
                                                 std::to_string(a.k) + "_s" +
                                                 std::to_string(a.seed) + ".json");
  write_json(metrics_path, out);
  return json{{"command", "adapt"},
              {"metrics", metrics_path.string()},
              {"accuracy", m.accuracy},
              {"params_trainable", m.params_trainable},
              {"method", m.method}};
}

json cmd_sweep(const RunConfig& config) {
  echo_config(config, "sweep");
  const auto data = load_data(config);
  const auto& ds = data.dataset;
  const auto labels = ds.label_column(config.label_field());
  const auto idx = pretrain_indices(config, data.split);
  const auto csv_path = config.output_dir / "sweep.csv";
  auto csv = open_csv(csv_path);
  csv << config.sweep.axis << ",tr_len,accuracy\n";
  json cells = json::array();
  for (double v : config.sweep.values) {
    for (auto tr : config.sweep.tr_len) {
      auto ssl = config.ssl_config();
      ssl.epochs = config.sweep.epochs;
      if (config.sweep.axis == "cd_prob") ssl.policy.cd_prob = v;
      else ssl.policy.cm_prob = v;
      ssl.policy.tr_len = tr;
      Encoder encoder(encoder_config_for(config, ds), derive_seed(config.seed, 1));
      pretrain(encoder, ds, idx, ssl);
      auto opts = probe_defaults();
      opts.batch_size = config.adapt.batch_size;
      const double acc = probe_accuracy(encoder, ds, data.split, labels, config.sweep.k,
                                        config.adapt.seed, opts, config.adapt.standardize);
      csv << v << ',' << tr << ',' << acc << '\n';
      cells.push_back({{config.sweep.axis, v}, {"tr_len", tr}, {"accuracy", acc}});
    }
  }
  require(static_cast<bool>(csv), ErrorCode::kIo, "write failed for " + csv_path.string());
  return json{{"command", "sweep"}, {"csv", csv_path.string()}, {"cells", cells}};
}

json cmd_cluster(const RunConfig& config) {
  echo_config(config, "cluster");
  const auto data = load_data(config);
  const auto& ds = data.dataset;
  auto encoder = load_encoder(config);
  std::vector<std::size_t> idx(ds.count);
  for (std::size_t i = 0; i < ds.count; ++i) idx[i] = i;
  if (config.analysis.max_records > 0 && config.analysis.max_records < idx.size()) {
    auto rng = make_rng(config.analysis.anchor_seed, 0xc105);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(config.analysis.max_records);
    std::sort(idx.begin(), idx.end());
  }
  require(idx.size() >= config.analysis.k_max, ErrorCode::kConfig,
          "cluster: " + std::to_string(idx.size()) + " records is fewer than k_max = " +
              std::to_string(config.analysis.k_max));
  const auto h = embed_dataset(encoder, ds, idx);

  std::vector<std::size_t> ks;
  for (auto k = config.analysis.k_min; k <= config.analysis.k_max; ++k) ks.push_back(k);
  const auto sweep = silhouette_sweep(h, ks, config.seed, config.analysis.max_iter);
  const auto sweep_path = config.output_dir / "silhouette.csv";
  {
    auto csv = open_csv(sweep_path);
    csv << "k,score\n";
    for (std::size_t i = 0; i < sweep.ks.size(); ++i) csv << sweep.ks[i] << ',' << sweep.scores[i] << '\n';
  }

  // Pseudo-labels for every label field: one anchor per class from the
  // training partition, clusters from k-means with k = class count.
  std::set<std::size_t> train_set(data.split.train.begin(), data.split.train.end());
  json pseudo = json::object();
  for (const auto& field : ds.label_fields) {
    const auto full = ds.label_column(field);
    std::vector<int> truth;
    for (auto i : idx) truth.push_back(full[i]);
    if (std::any_of(truth.begin(), truth.end(), [](int y) { return y < 0; })) continue;
    const auto classes = class_count(truth);
    if (classes < 2) continue;
    auto rng = make_rng(config.analysis.anchor_seed, 0xa1c4);
    std::vector<std::size_t> anchors(classes);
    bool ok = true;
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> pool;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (truth[r] == static_cast<int>(c) && train_set.count(idx[r])) pool.push_back(r);
      }
      if (pool.empty()) {
        for (std::size_t r = 0; r < idx.size(); ++r) {
          if (truth[r] == static_cast<int>(c)) pool.push_back(r);
        }
      }
      if (pool.empty()) {
        ok = false;
        break;
      }
      anchors[c] = pool[uniform_index(rng, 0, pool.size() - 1)];
    }
    if (!ok) continue;
    const auto k = config.analysis.cluster_k.value_or(classes);
    require(k <= idx.size(), ErrorCode::kConfig, "cluster_k exceeds the record count");
    const auto cl = kmeans(h, k, config.seed, config.analysis.max_iter);
    const auto pl = pseudo_label(h, anchors, cl, truth);
    pseudo[field] = {{"classes", classes},
                     {"k", k},
                     {"accuracy", pl.accuracy},
                     {"chance", 1.0 / static_cast<double>(classes)},
                     {"cluster_label", pl.cluster_label}};
  }
  const auto pseudo_path = config.output_dir / "pseudo_labels.json";
  write_json(pseudo_path, pseudo);

  const auto dims = std::min(config.analysis.pca_dims, h.shape[1]);
  const auto pca = pca_project(h, dims);
  const auto pca_path = config.output_dir / "pca.csv";
  {
    auto csv = open_csv(pca_path);
    csv << "index";
    for (std::size_t p = 0; p < dims; ++p) csv << ",pc" << (p + 1);
    for (const auto& f : ds.label_fields) csv << ',' << f;
    csv << '\n';
    for (std::size_t r = 0; r < idx.size(); ++r) {
      csv << idx[r];
      for (std::size_t p = 0; p < dims; ++p) csv << ',' << pca.coordinates.data[r * dims + p];
      for (std::size_t f = 0; f < ds.label_fields.size(); ++f) csv << ',' << ds.label(idx[r], f);
      csv << '\n';
    }
  }
  const auto var_path = config.output_dir / "pca_variance.csv";
  {
    auto csv = open_csv(var_path);
    csv << "component,explained_ratio\n";
    for (std::size_t p = 0; p < dims; ++p) csv << (p + 1) << ',' << pca.explained_ratio[p] << '\n';
  }
  return json{{"command", "cluster"},
              {"best_k", sweep.best_k},
              {"silhouette_csv", sweep_path.string()},
              {"pseudo_labels", pseudo},
              {"pca_csv", pca_path.string()},
              {"explained_ratio", pca.explained_ratio}};
}

json cmd_ablate(const RunConfig& config) {
  echo_config(config, "ablate");
  const auto data = load_data(config);
  const auto& ds = data.dataset;
  const auto idx = pretrain_indices(config, data.split);
  const auto& ab = config.ablate;
  struct Row {
    bool tr, cm, cd;
  };
  const Row table[] = {{true, false, false}, {false, true, false}, {false, false, true},
                       {true, true, false},  {true, false, true},  {true, true, true}};

  std::vector<std::pair<std::string, std::vector<int>>> tasks;
  for (const auto& [name, field] : {std::pair<std::string, std::string>{"aoa", "aoa_bin"},
                                    std::pair<std::string, std::string>{"mod", "modulation"}}) {
    if (ds.has_field(field)) tasks.emplace_back(name, ds.label_column(field));
  }
  require(!tasks.empty(), ErrorCode::kConfig, "ablate needs modulation and/or aoa_bin labels");

  const auto csv_path = config.output_dir / "ablation.csv";
  auto csv = open_csv(csv_path);
  csv << "time_rolling,masking,dropping";
  for (const auto& [name, _] : tasks)
    for (auto k : ab.budgets) csv << ',' << name << '_' << k;
  csv << '\n';
  json out_rows = json::array();
  std::vector<std::size_t> all(ds.count);
  for (std::size_t i = 0; i < ds.count; ++i) all[i] = i;
  for (const auto& row : table) {
    auto ssl = config.ssl_config();
    ssl.epochs = ab.epochs;
    ssl.policy.task = Task::kJoint;
    ssl.policy.tr_len = row.tr ? ab.tr_len : 0;
    ssl.policy.tr_prob = row.tr ? ab.tr_prob : 0.0;
    ssl.policy.cm_len = row.cm ? ab.cm_len : 0;
    ssl.policy.cm_prob = row.cm ? ab.cm_prob : 0.0;
    ssl.policy.cd_prob = row.cd ? ab.cd_prob : 0.0;
    Encoder encoder(encoder_config_for(config, ds), derive_seed(config.seed, 1));
    pretrain(encoder, ds, idx, ssl);
    const auto h = embed_dataset(encoder, ds, all);
    csv << int(row.tr) << ',' << int(row.cm) << ',' << int(row.cd);
    json r{{"time_rolling", row.tr}, {"masking", row.cm}, {"dropping", row.cd}};
    for (const auto& [name, labels] : tasks) {
      for (auto k : ab.budgets) {
        auto opts = probe_defaults();
        opts.batch_size = config.adapt.batch_size;
        const double acc = probe_accuracy(encoder, ds, data.split, labels, k, config.adapt.seed,
                                          opts, config.adapt.standardize, &h);
        csv << ',' << acc;
        r[name + "_" + std::to_string(k)] = acc;
      }
    }
    csv << '\n';
    out_rows.push_back(r);
  }
  require(static_cast<bool>(csv), ErrorCode::kIo, "write failed for " + csv_path.string());
  return json{{"command", "ablate"}, {"csv", csv_path.string()}, {"rows", out_rows}};
}

json cmd_report(const RunConfig& config) {
  echo_config(config, "report");
  require(fs::is_directory(config.output_dir), ErrorCode::kIo,
          "output directory " + config.output_dir.string() + " does not exist");
  json metrics = json::array();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(config.output_dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("metrics_", 0) == 0 && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto j = json::parse(detail::read_file(f));
    metrics.push_back({{"file", f.filename().string()},
                       {"task", j.value("task", "")},
                       {"method", j.value("method", "")},
                       {"k", j.value("k", 0)},
                       {"seed", j.value("seed", 0)},
                       {"accuracy", j.value("accuracy", 0.0)},
                       {"params_trainable", j.value("params_trainable", 0)}});
  }
  json digests = json::object();
  for (const auto& e : fs::directory_iterator(config.output_dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name == "report.json" || name == "report.csv" || name == "report.config.json") continue;
    digests[name] = hex_digest(file_digest(e.path()));
  }
  const auto csv_path = config.output_dir / "report.csv";
  {
    auto csv = open_csv(csv_path);
    csv << "task,method,k,seed,accuracy,params_trainable\n";
    for (const auto& m : metrics) {
      csv << m["task"].get<std::string>() << ',' << m["method"].get<std::string>() << ','
          << m["k"] << ',' << m["seed"] << ',' << m["accuracy"].get<double>() << ','
          << m["params_trainable"] << '\n';
    }
  }
  json report{{"command", "report"}, {"metrics", metrics}, {"digests", digests}, {"csv", csv_path.string()}};
  write_json(config.output_dir / "report.json", report);
  return report;
}

json run_command(const std::string& command, const RunConfig& config) {
  if (command == "gen") return cmd_gen(config);
  if (command == "pretrain") return cmd_pretrain(config);
  if (command == "adapt") return cmd_adapt(config);
  if (command == "sweep") return cmd_sweep(config);
  if (command == "cluster") return cmd_cluster(config);
  if (command == "ablate") return cmd_ablate(config);
  if (command == "report") return cmd_report(config);
  fail(ErrorCode::kConfig, "unknown command '" + command + "'");
}

}  // namespace iqbench
