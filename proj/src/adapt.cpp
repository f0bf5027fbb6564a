#include "iqbench/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "bytes.hpp"
#include "iqbench/error.hpp"
#include "iqbench/optim.hpp"
#include "iqbench/rng.hpp"

namespace iqbench {

using json = nlohmann::json;

FewShotSplit few_shot_split(std::span<const int> labels, std::span<const std::size_t> train_pool,
                            std::span<const std::size_t> test_pool, std::size_t k,
                            std::uint64_t seed) {
  require(k >= 1, ErrorCode::kInvalidArgument, "few_shot_split: k must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (auto i : train_pool) {
    require(i < labels.size(), ErrorCode::kInvalidArgument, "few_shot_split: index out of range");
    if (labels[i] == kUnlabeled) continue;
    by_class[labels[i]].push_back(i);
  }
  std::map<int, bool> in_test;
  for (auto i : test_pool) {
    require(i < labels.size(), ErrorCode::kInvalidArgument, "few_shot_split: index out of range");
    if (labels[i] != kUnlabeled) in_test[labels[i]] = true;
  }
  for (const auto& [cls, present] : in_test) {
    require(by_class.count(cls) > 0, ErrorCode::kInvalidArgument,
            "few_shot_split: class " + std::to_string(cls) + " has no training records");
  }
  require(!by_class.empty(), ErrorCode::kInvalidArgument, "few_shot_split: empty training pool");
  FewShotSplit split;
  split.k = k;
  split.seed = seed;
  auto rng = make_rng(seed, 0xf5);
  for (auto& [cls, members] : by_class) {
    std::sort(members.begin(), members.end());
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = std::min(k, members.size());
    split.train.insert(split.train.end(), members.begin(),
                       members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(split.train.begin(), split.train.end());
  split.test.assign(test_pool.begin(), test_pool.end());
  return split;
}

void write_few_shot_split(const FewShotSplit& split, const std::filesystem::path& path) {
  json j{{"k", split.k}, {"seed", split.seed}, {"train", split.train}, {"test", split.test}};
  detail::write_file(path, j.dump() + "\n");
}

FewShotSplit read_few_shot_split(const std::filesystem::path& path) {
  FewShotSplit s;
  try {
    const auto j = json::parse(detail::read_file(path));
    s.k = j.at("k").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "few-shot split " + path.string() + ": " + e.what());
  }
  return s;
}

Evaluation evaluate(std::span<const int> predictions, std::span<const int> truth,
                    std::size_t classes) {
  require(!truth.empty(), ErrorCode::kInvalidArgument, "evaluate: empty test set");
  require(predictions.size() == truth.size(), ErrorCode::kShapeMismatch,
          "evaluate: " + std::to_string(predictions.size()) + " predictions for " +
              std::to_string(truth.size()) + " labels");
  Evaluation ev;
  ev.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  ev.predictions.assign(predictions.begin(), predictions.end());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = truth[i];
    const auto p = predictions[i];
    require(t >= 0 && static_cast<std::size_t>(t) < classes && p >= 0 &&
                static_cast<std::size_t>(p) < classes,
            ErrorCode::kInvalidArgument, "evaluate: label outside [0, classes)");
    ++ev.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    if (t == p) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  return ev;
}

TrainOptions probe_defaults() { return TrainOptions{100, 1e-3, 32, 1e-2, 0}; }
TrainOptions lora_defaults() { return TrainOptions{100, 1e-2, 32, 1e-2, 0}; }
TrainOptions supervised_defaults() { return TrainOptions{100, 1e-2, 32, 1e-2, 0}; }

namespace {

void check_options(const TrainOptions& o) {
  require(o.lr > 0.0, ErrorCode::kConfig, "learning rate must be positive");
  require(o.batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
}

void check_classes(std::span<const int> labels, std::size_t classes) {
  require(!labels.empty(), ErrorCode::kInvalidArgument, "no training records");
  std::vector<bool> seen(classes, false);
  std::size_t distinct = 0;
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < classes, ErrorCode::kInvalidArgument,
            "training label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    if (!seen[static_cast<std::size_t>(y)]) {
      seen[static_cast<std::size_t>(y)] = true;
      ++distinct;
    }
  }
  require(distinct >= 2, ErrorCode::kInvalidArgument,
          "refusing to train a classifier on a single-class split");
}

void init_head(Tensor& w, Tensor& b, std::size_t classes, std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  w = Tensor({classes, dim}, true);
  b = Tensor({classes}, true);
  for (auto& v : w.data) v = uniform(rng, -bound, bound);
  for (auto& v : b.data) v = uniform(rng, -bound, bound);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const auto rows = logits.shape[0];
  const auto cols = logits.shape[1];
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = logits.data.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace

std::vector<int> ProbeHead::predict(const Tensor& features) const {
  require(features.rank() == 2 && features.shape[1] == weight.shape[1], ErrorCode::kShapeMismatch,
          "probe: features " + shape_str(features.shape) + " for head " + shape_str(weight.shape));
  const auto n = features.shape[0];
  const auto d = features.shape[1];
  Tensor x({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x.data[i * d + j] = (features.data[i * d + j] - feature_mean[j]) / feature_scale[j];
  Tape tape;
  auto wt = weight;
  auto bt = bias;
  wt.requires_grad = bt.requires_grad = false;
  const auto logits = linear(tape, tape.constant(std::move(x)), tape.parameter(wt), tape.parameter(bt));
  return argmax_rows(tape.value(logits));
}

ProbeHead train_linear_probe(const Tensor& features, std::span<const int> labels,
                             std::size_t classes, const TrainOptions& options,
                             TrainResult* result, bool standardize) {
  check_options(options);
  require(features.rank() == 2 && features.shape[0] == labels.size(), ErrorCode::kShapeMismatch,
          "probe: " + shape_str(features.shape) + " features for " + std::to_string(labels.size()) +
              " labels");
  check_classes(labels, classes);
  const auto n = features.shape[0];
  const auto d = features.shape[1];

  ProbeHead head;
  head.feature_mean.assign(d, 0.0);
  head.feature_scale.assign(d, 1.0);
  if (standardize) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) head.feature_mean[j] += features.data[i * d + j];
    for (auto& m : head.feature_mean) m /= static_cast<double>(n);
    if (n > 1) {
      for (std::size_t j = 0; j < d; ++j) {
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double c = features.data[i * d + j] - head.feature_mean[j];
          ss += c * c;
        }
        head.feature_scale[j] = std::sqrt(ss / static_cast<double>(n - 1)) + 1e-6;
      }
    }
  }
  Tensor x({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x.data[i * d + j] = (features.data[i * d + j] - head.feature_mean[j]) / head.feature_scale[j];

  auto rng = make_rng(options.seed, 0x9e0be);
  init_head(head.weight, head.bias, classes, d, rng);
  AdamWConfig oc;
  oc.weight_decay = options.weight_decay;
  AdamW opt({{"probe.weight", &head.weight}, {"probe.bias", &head.bias}}, oc);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainResult local;
  TrainResult& res = result ? *result : local;
  res = TrainResult{};
  res.params_trainable = head.weight.numel() + head.bias.numel();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const double lr = cosine_anneal(options.lr, epoch, options.epochs, kDefaultMinLearningRate);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const auto bs = std::min(options.batch_size, n - start);
      Tensor xb({bs, d});
      std::vector<int> yb(bs);
      for (std::size_t r = 0; r < bs; ++r) {
        const auto i = order[start + r];
        std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                  x.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d),
                  xb.data.begin() + static_cast<std::ptrdiff_t>(r * d));
        yb[r] = labels[i];
      }
      Tape tape;
      const auto logits = linear(tape, tape.constant(std::move(xb)), tape.parameter(head.weight),
                                 tape.parameter(head.bias));
      const auto loss = softmax_cross_entropy(tape, logits, yb);
      total += tape.value(loss).item();
      ++batches;
      opt.zero_grad();
      tape.backward(loss);
      opt.step(lr);
    }
    res.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  const auto pred = head.predict(features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += pred[i] == labels[i] ? 1 : 0;
  res.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return head;
}

// --- LoRA ------------------------------------------------------------------

LoraStack::LoraStack(Encoder& base, const LoraConfig& config, std::uint64_t seed)
    : base_(&base), config_(config) {
  require(config.rank >= 1, ErrorCode::kInvalidArgument, "lora rank must be >= 1");
  require(std::isfinite(config.alpha), ErrorCode::kInvalidArgument, "lora alpha must be finite");
  auto rng = make_rng(seed, 0x10ea);
  for (const auto& layer : base.backbone()) {
    const bool wrap = layer.kind == LayerKind::kConv ? config.wrap_convolutions : config.wrap_linear;
    if (!wrap) continue;
    const auto fan_in = layer.fan_in();
    const auto fan_out = layer.fan_out();
    require(config.rank <= std::min(fan_in, fan_out), ErrorCode::kInvalidArgument,
            "lora rank " + std::to_string(config.rank) + " exceeds min(fan_in, fan_out) = " +
                std::to_string(std::min(fan_in, fan_out)) + " of layer " + layer.name);
    LoraAdapter a;
    a.layer = layer.name;
    a.a = Tensor({config.rank, fan_in}, true);
    a.b = Tensor({fan_out, config.rank}, true);
    a.scaling = config.alpha / static_cast<double>(config.rank);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : a.a.data) v = uniform(rng, -bound, bound);
    adapters_.push_back(std::move(a));
  }
  require(!adapters_.empty(), ErrorCode::kInvalidArgument, "lora configuration wraps no layer");
}

WeightHook LoraStack::hook() {
  return [this](Tape& tape, const Layer& layer, Var w) -> Var {
    for (auto& ad : adapters_) {
      if (ad.layer != layer.name) continue;
      const auto ba = matmul(tape, tape.parameter(ad.b), tape.parameter(ad.a));
      const auto delta = scale(tape, reshape(tape, ba, layer.weight.shape), ad.scaling);
      return add(tape, w, delta);
    }
    return w;
  };
}

std::size_t LoraStack::trainable_count() const {
  std::size_t n = 0;
  for (const auto& a : adapters_) n += a.a.numel() + a.b.numel();
  return n;
}

std::vector<NamedTensor> LoraStack::parameters() {
  std::vector<NamedTensor> out;
  for (auto& a : adapters_) {
    out.push_back({a.layer + ".lora_a", &a.a});
    out.push_back({a.layer + ".lora_b", &a.b});
  }
  return out;
}

Encoder LoraStack::merged() const {
  Encoder out = *base_;
  for (const auto& ad : adapters_) {
    for (auto& layer : out.backbone()) {
      if (layer.name != ad.layer) continue;
      const auto r = ad.a.shape[0];
      const auto fan_in = ad.a.shape[1];
      const auto fan_out = ad.b.shape[0];
      for (std::size_t o = 0; o < fan_out; ++o) {
        for (std::size_t i = 0; i < fan_in; ++i) {
          double acc = 0.0;
          for (std::size_t q = 0; q < r; ++q) acc += ad.b.data[o * r + q] * ad.a.data[q * fan_in + i];
          layer.weight.data[o * fan_in + i] += ad.scaling * acc;
        }
      }
    }
  }
  return out;
}

Checkpoint LoraStack::to_checkpoint() const {
  Checkpoint ck;
  ck.kind = "lora";
  ck.meta["rank"] = config_.rank;
  ck.meta["alpha"] = config_.alpha;
  ck.meta["wrap_convolutions"] = config_.wrap_convolutions;
  ck.meta["wrap_linear"] = config_.wrap_linear;
  ck.meta["layers"] = json::array();
  for (const auto& a : adapters_) {
    ck.meta["layers"].push_back(a.layer);
    ck.entries.push_back({a.layer + ".lora_a", Tensor(a.a.shape, a.a.data)});
    ck.entries.push_back({a.layer + ".lora_b", Tensor(a.b.shape, a.b.data)});
  }
  return ck;
}

void LoraStack::load(const Checkpoint& ck) {
  require(ck.kind == "lora", ErrorCode::kHeaderMismatch, "checkpoint kind '" + ck.kind + "' is not lora");
  for (auto& a : adapters_) {
    const auto& ta = ck.get(a.layer + ".lora_a");
    const auto& tb = ck.get(a.layer + ".lora_b");
    require(ta.shape == a.a.shape && tb.shape == a.b.shape, ErrorCode::kHeaderMismatch,
            "adapter shapes for " + a.layer + " do not match");
    a.a.data = ta.data;
    a.b.data = tb.data;
  }
}

LoraStack lora_wrap(Encoder& base, const LoraConfig& config, std::uint64_t seed) {
  base.set_trainable(false, false);
  return LoraStack(base, config, seed);
}

// --- end-to-end classifiers ------------------------------------------------

Classifier make_classifier(Encoder& encoder, LoraStack* lora, std::size_t classes,
                           std::uint64_t seed) {
  require(classes >= 2, ErrorCode::kInvalidArgument, "classifier needs at least two classes");
  Classifier c;
  c.encoder = &encoder;
  c.lora = lora;
  auto rng = make_rng(seed, 0xc1a55);
  init_head(c.head_weight, c.head_bias, classes, encoder.config().embedding_dim, rng);
  return c;
}

std::vector<int> Classifier::predict(const IQDataset& dataset, std::span<const std::size_t> indices,
                                     std::size_t batch_size) {
  const auto h = embed_dataset(*encoder, dataset, indices, batch_size,
                               lora ? lora->hook() : WeightHook{});
  Tape tape;
  auto w = head_weight;
  auto b = head_bias;
  w.requires_grad = b.requires_grad = false;
  const auto logits = linear(tape, tape.constant(h), tape.parameter(w), tape.parameter(b));
  return argmax_rows(tape.value(logits));
}

TrainResult train_classifier(Classifier& model, const IQDataset& dataset,
                             std::span<const std::size_t> train, std::span<const int> labels,
                             const TrainOptions& options) {
  check_options(options);
  require(model.encoder != nullptr, ErrorCode::kInvalidArgument, "classifier without encoder");
  const auto classes = model.head_weight.shape[0];
  std::vector<int> train_labels;
  for (auto i : train) {
    require(i < labels.size(), ErrorCode::kInvalidArgument, "train index out of range");
    train_labels.push_back(labels[i]);
  }
  check_classes(train_labels, classes);

  std::vector<NamedTensor> params;
  WeightHook hook;
  if (model.lora) {
    model.encoder->set_trainable(false, false);
    params = model.lora->parameters();
    for (auto& p : params) p.tensor->requires_grad = true;
    hook = model.lora->hook();
  } else {
    model.encoder->set_trainable(true, false);
    params = model.encoder->parameters(false);
  }
  model.head_weight.requires_grad = model.head_bias.requires_grad = true;
  params.push_back({"head.weight", &model.head_weight});
  params.push_back({"head.bias", &model.head_bias});

  TrainResult res;
  for (const auto& p : params) res.params_trainable += p.tensor->numel();
  AdamWConfig oc;
  oc.weight_decay = options.weight_decay;
  AdamW opt(params, oc);
  auto rng = make_rng(options.seed, 0x7a1);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto M = model.encoder->config().antennas;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const double lr = cosine_anneal(options.lr, epoch, options.epochs, kDefaultMinLearningRate);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const auto bs = std::min(options.batch_size, order.size() - start);
      std::vector<std::size_t> idx(bs);
      std::vector<int> yb(bs);
      for (std::size_t r = 0; r < bs; ++r) {
        idx[r] = train[order[start + r]];
        yb[r] = train_labels[order[start + r]];
      }
      Tape tape;
      const auto x = tape.constant(make_batch(dataset, idx, M));
      const auto h = model.encoder->encode(tape, x, hook);
      const auto logits = linear(tape, h, tape.parameter(model.head_weight),
                                 tape.parameter(model.head_bias));
      const auto loss = softmax_cross_entropy(tape, logits, yb);
      const double value = tape.value(loss).item();
      require(std::isfinite(value), ErrorCode::kNumeric,
              "non-finite training loss at epoch " + std::to_string(epoch));
      total += value;
      ++batches;
      opt.zero_grad();
      tape.backward(loss);
      opt.step(lr);
    }
    res.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  const auto pred = model.predict(dataset, train);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == train_labels[i] ? 1 : 0;
  res.train_accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  return res;
}

TrainResult train_lora(Classifier& model, const IQDataset& dataset,
                       std::span<const std::size_t> train, std::span<const int> labels,
                       const TrainOptions& options) {
  require(model.lora != nullptr, ErrorCode::kInvalidArgument, "train_lora: classifier has no adapters");
  const auto before = model.encoder->digest();
  auto res = train_classifier(model, dataset, train, labels, options);
  require(model.encoder->digest() == before, ErrorCode::kNumeric,
          "train_lora: base encoder weights changed during adaptation");
  return res;
}

TrainResult train_supervised_baseline(Classifier& model, const IQDataset& dataset,
                                      std::span<const std::size_t> train,
                                      std::span<const int> labels, const TrainOptions& options) {
  require(model.lora == nullptr, ErrorCode::kInvalidArgument,
          "supervised baseline trains the full encoder; drop the adapters");
  return train_classifier(model, dataset, train, labels, options);
}

json AdaptMetrics::to_json() const {
  return json{{"task", task},         {"k", k},
              {"seed", seed},         {"method", method},
              {"accuracy", accuracy}, {"params_trainable", params_trainable}};
}

}  // namespace iqbench
