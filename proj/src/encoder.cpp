#include "iqbench/encoder.hpp"

#include <cmath>

#include "iqbench/digest.hpp"
#include "iqbench/error.hpp"
#include "iqbench/rng.hpp"

namespace iqbench {

using json = nlohmann::json;

void EncoderConfig::validate() const {
  require(antennas >= 1, ErrorCode::kConfig, "encoder needs at least one antenna");
  require(!widths.empty(), ErrorCode::kConfig, "encoder needs at least one stage");
  require(strides.size() == widths.size(), ErrorCode::kConfig,
          "encoder strides (" + std::to_string(strides.size()) + ") and widths (" +
              std::to_string(widths.size()) + ") differ in length");
  for (auto w : widths) require(w >= 1, ErrorCode::kConfig, "stage widths must be positive");
  for (auto s : strides) require(s >= 1, ErrorCode::kConfig, "stage strides must be positive");
  require(kernel >= 1, ErrorCode::kConfig, "kernel must be positive");
  require(embedding_dim >= 2, ErrorCode::kConfig, "embedding_dim must be >= 2");
  require(projection_dim >= 2, ErrorCode::kConfig, "projection_dim must be >= 2");
  require(time >= min_time(), ErrorCode::kConfig,
          "time " + std::to_string(time) + " below the encoder minimum " + std::to_string(min_time()));
}

std::size_t EncoderConfig::min_time() const {
  std::size_t t = 1;
  for (auto s : strides) t *= s;
  return t;
}

json EncoderConfig::to_json() const {
  return json{{"antennas", antennas},
              {"time", time},
              {"widths", widths},
              {"strides", strides},
              {"kernel", kernel},
              {"embedding_dim", embedding_dim},
              {"projection_hidden", projection_hidden},
              {"projection_dim", projection_dim},
              {"input_norm", input_norm}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  EncoderConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "antennas") c.antennas = value.get<std::size_t>();
      else if (key == "time") c.time = value.get<std::size_t>();
      else if (key == "widths") c.widths = value.get<std::vector<std::size_t>>();
      else if (key == "strides") c.strides = value.get<std::vector<std::size_t>>();
      else if (key == "kernel") c.kernel = value.get<std::size_t>();
      else if (key == "embedding_dim") c.embedding_dim = value.get<std::size_t>();
      else if (key == "projection_hidden") c.projection_hidden = value.get<std::size_t>();
      else if (key == "projection_dim") c.projection_dim = value.get<std::size_t>();
      else if (key == "input_norm") c.input_norm = value.get<bool>();
      else fail(ErrorCode::kConfig, "unknown encoder key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("encoder config: ") + e.what());
  }
  if (j.contains("widths") && !j.contains("strides")) c.strides.assign(c.widths.size(), 2);
  c.validate();
  return c;
}

std::size_t Layer::fan_in() const {
  std::size_t n = 1;
  for (std::size_t i = 1; i < weight.shape.size(); ++i) n *= weight.shape[i];
  return n;
}

std::size_t parameter_count(const EncoderConfig& c) {
  std::size_t n = 0;
  std::size_t in = c.antennas;
  for (std::size_t s = 0; s < c.widths.size(); ++s) {
    const std::size_t kh = s == 0 ? 2 : 1;
    n += c.widths[s] * in * kh * c.kernel + c.widths[s];
    in = c.widths[s];
  }
  n += c.embedding_dim * in + c.embedding_dim;
  if (c.projection_hidden > 0) {
    n += c.projection_hidden * c.embedding_dim + c.projection_hidden;
    n += c.projection_dim * c.projection_hidden + c.projection_dim;
  } else {
    n += c.projection_dim * c.embedding_dim + c.projection_dim;
  }
  return n;
}

namespace {

void init_uniform(Layer& layer, Rng& rng) {
  // Kaiming-uniform with negative slope sqrt(5): bound = 1 / sqrt(fan_in).
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer.fan_in()));
  for (auto& v : layer.weight.data) v = uniform(rng, -bound, bound);
  for (auto& v : layer.bias.data) v = uniform(rng, -bound, bound);
}

Layer make_conv(std::string name, std::size_t out, std::size_t in, std::size_t kh, std::size_t kw,
                std::size_t stride) {
  Layer l;
  l.name = std::move(name);
  l.kind = LayerKind::kConv;
  l.weight = Tensor({out, in, kh, kw}, true);
  l.bias = Tensor({out}, true);
  l.geom = Conv2dGeometry{1, stride, 0, kw / 2};
  return l;
}

Layer make_linear(std::string name, std::size_t out, std::size_t in) {
  Layer l;
  l.name = std::move(name);
  l.kind = LayerKind::kLinear;
  l.weight = Tensor({out, in}, true);
  l.bias = Tensor({out}, true);
  return l;
}

}  // namespace

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::size_t in = config_.antennas;
  for (std::size_t s = 0; s < config_.widths.size(); ++s) {
    backbone_.push_back(make_conv("conv" + std::to_string(s + 1), config_.widths[s], in,
                                  s == 0 ? 2 : 1, config_.kernel, config_.strides[s]));
    in = config_.widths[s];
  }
  backbone_.push_back(make_linear("embed", config_.embedding_dim, in));
  if (config_.projection_hidden > 0) {
    head_.push_back(make_linear("proj1", config_.projection_hidden, config_.embedding_dim));
    head_.push_back(make_linear("proj2", config_.projection_dim, config_.projection_hidden));
  } else {
    head_.push_back(make_linear("proj1", config_.projection_dim, config_.embedding_dim));
  }
  auto rng = make_rng(seed, 0xe9c0de);
  for (auto& l : backbone_) init_uniform(l, rng);
  for (auto& l : head_) init_uniform(l, rng);
}

Var Encoder::apply(Tape& tape, Layer& layer, Var x, const WeightHook& hook) {
  Var w = tape.parameter(layer.weight);
  if (hook) w = hook(tape, layer, w);
  const Var b = tape.parameter(layer.bias);
  if (layer.kind == LayerKind::kConv) return conv2d(tape, x, w, b, layer.geom);
  return linear(tape, x, w, b);
}

Var Encoder::encode(Tape& tape, Var x, const WeightHook& hook) {
  const auto& tx = tape.value(x);
  require(tx.rank() == 4 && tx.shape[1] == config_.antennas && tx.shape[2] == 2,
          ErrorCode::kShapeMismatch,
          "encode: expected [B, " + std::to_string(config_.antennas) + ", 2, T], got " +
              shape_str(tx.shape));
  require(tx.shape[3] >= config_.min_time(), ErrorCode::kShapeMismatch,
          "encode: T = " + std::to_string(tx.shape[3]) + " below the minimum " +
              std::to_string(config_.min_time()));
  Var h = x;
  if (config_.input_norm) {
    require(!tape.needs_grad(x), ErrorCode::kInvalidArgument,
            "encode: input_norm needs a constant input");
    Tensor scaled = tx;
    const auto per = shape_numel(tx.shape) / tx.shape[0];
    for (std::size_t b = 0; b < tx.shape[0]; ++b) {
      double mx = 0.0;
      for (std::size_t i = 0; i < per; ++i) mx = std::max(mx, std::abs(scaled.data[b * per + i]));
      if (mx > 0.0) {
        for (std::size_t i = 0; i < per; ++i) scaled.data[b * per + i] /= mx;
      }
    }
    h = tape.constant(std::move(scaled));
  }
  for (std::size_t i = 0; i + 1 < backbone_.size(); ++i) {
    h = relu(tape, apply(tape, backbone_[i], h, hook));
  }
  h = global_avg_pool(tape, h);
  return apply(tape, backbone_.back(), h, hook);
}

Var Encoder::project(Tape& tape, Var h, const WeightHook& hook) {
  const auto& th = tape.value(h);
  require(th.rank() == 2 && th.shape[1] == config_.embedding_dim, ErrorCode::kShapeMismatch,
          "project: expected [B, " + std::to_string(config_.embedding_dim) + "], got " +
              shape_str(th.shape));
  Var z = h;
  for (std::size_t i = 0; i < head_.size(); ++i) {
    z = apply(tape, head_[i], z, hook);
    if (i + 1 < head_.size()) z = relu(tape, z);
  }
  return l2_normalize(tape, z);
}

std::vector<NamedTensor> Encoder::parameters(bool include_head) {
  std::vector<NamedTensor> out;
  for (auto& l : backbone_) {
    out.push_back({l.name + ".weight", &l.weight});
    out.push_back({l.name + ".bias", &l.bias});
  }
  if (include_head) {
    for (auto& l : head_) {
      out.push_back({l.name + ".weight", &l.weight});
      out.push_back({l.name + ".bias", &l.bias});
    }
  }
  return out;
}

void Encoder::set_trainable(bool backbone, bool head) {
  for (auto& l : backbone_) {
    l.weight.requires_grad = backbone;
    l.bias.requires_grad = backbone;
    if (!backbone) {
      l.weight.grad.clear();
      l.bias.grad.clear();
    }
  }
  for (auto& l : head_) {
    l.weight.requires_grad = head;
    l.bias.requires_grad = head;
    if (!head) {
      l.weight.grad.clear();
      l.bias.grad.clear();
    }
  }
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : backbone_) n += l.weight.numel() + l.bias.numel();
  for (const auto& l : head_) n += l.weight.numel() + l.bias.numel();
  return n;
}

Checkpoint Encoder::to_checkpoint() const {
  Checkpoint ck;
  ck.kind = "encoder";
  ck.meta["config"] = config_.to_json();
  auto push = [&](const Layer& l) {
    ck.entries.push_back({l.name + ".weight", Tensor(l.weight.shape, l.weight.data)});
    ck.entries.push_back({l.name + ".bias", Tensor(l.bias.shape, l.bias.data)});
  };
  for (const auto& l : backbone_) push(l);
  for (const auto& l : head_) push(l);
  return ck;
}

Encoder Encoder::from_checkpoint(const Checkpoint& ck) {
  require(ck.kind == "encoder", ErrorCode::kHeaderMismatch,
          "checkpoint kind '" + ck.kind + "' is not an encoder");
  require(ck.meta.contains("config"), ErrorCode::kHeaderMismatch, "encoder checkpoint lacks config");
  Encoder enc(EncoderConfig::from_json(ck.meta.at("config")));
  auto load = [&](Layer& l) {
    for (auto* t : {&l.weight, &l.bias}) {
      const auto& src = ck.get(l.name + (t == &l.weight ? ".weight" : ".bias"));
      require(src.shape == t->shape, ErrorCode::kHeaderMismatch,
              "checkpoint shape " + shape_str(src.shape) + " for " + l.name + " expected " +
                  shape_str(t->shape));
      t->data = src.data;
    }
  };
  for (auto& l : enc.backbone_) load(l);
  for (auto& l : enc.head_) load(l);
  require(ck.entries.size() == 2 * (enc.backbone_.size() + enc.head_.size()),
          ErrorCode::kHeaderMismatch, "encoder checkpoint has unexpected extra parameters");
  return enc;
}

std::uint64_t Encoder::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const Tensor& t) {
    h = fnv1a64(std::as_bytes(std::span<const double>(t.data)), h);
  };
  for (const auto& l : backbone_) {
    mix(l.weight);
    mix(l.bias);
  }
  for (const auto& l : head_) {
    mix(l.weight);
    mix(l.bias);
  }
  return h;
}

Tensor embed(Encoder& encoder, const Tensor& batch, const WeightHook& hook) {
  Tape tape;
  const Var x = tape.constant(batch);
  const Var h = encoder.encode(tape, x, hook);
  return tape.value(h);
}

Tensor embed_dataset(Encoder& encoder, const IQDataset& dataset,
                     std::span<const std::size_t> indices, std::size_t batch_size,
                     const WeightHook& hook) {
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "embed_dataset: batch_size must be >= 1");
  const auto D = encoder.config().embedding_dim;
  Tensor out({indices.size(), D});
  // Gradients are not needed; detach parameters for the duration.
  std::vector<bool> saved;
  for (auto& p : encoder.parameters()) saved.push_back(p.tensor->requires_grad);
  for (auto& p : encoder.parameters()) p.tensor->requires_grad = false;
  try {
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
      const auto n = std::min(batch_size, indices.size() - start);
      const auto batch = make_batch(dataset, indices.subspan(start, n), encoder.config().antennas);
      const auto h = embed(encoder, batch, hook);
      std::copy(h.data.begin(), h.data.end(),
                out.data.begin() + static_cast<std::ptrdiff_t>(start * D));
    }
  } catch (...) {
    std::size_t i = 0;
    for (auto& p : encoder.parameters()) p.tensor->requires_grad = saved[i++];
    throw;
  }
  std::size_t i = 0;
  for (auto& p : encoder.parameters()) p.tensor->requires_grad = saved[i++];
  return out;
}

}  // namespace iqbench
