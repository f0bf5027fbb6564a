#include "iqbench/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "iqbench/error.hpp"
#include "iqbench/rng.hpp"

namespace iqbench {

void SslConfig::validate() const {
  require(batch_size >= 1, ErrorCode::kConfig, "ssl batch_size must be >= 1");
  require(temperature > 0.0 && std::isfinite(temperature), ErrorCode::kConfig,
          "ssl temperature must be positive");
  require(lr > 0.0 && lr >= lr_min, ErrorCode::kConfig, "ssl lr must be positive and >= lr_min");
  require(lr_min >= 0.0, ErrorCode::kConfig, "ssl lr_min must be >= 0");
  require(weight_decay >= 0.0, ErrorCode::kConfig, "ssl weight_decay must be >= 0");
  require(plateau_epochs >= 1, ErrorCode::kConfig, "plateau_epochs must be >= 1");
}

SslConfig ssl_preset(Task task) {
  SslConfig c;
  c.policy = policy_preset(task);
  switch (task) {
    case Task::kMod: c.lr = 0.1; c.temperature = 1.5; break;
    case Task::kAoa: c.lr = 0.1; c.temperature = 1.5; break;
    case Task::kJoint: c.lr = 0.5; c.temperature = 0.12; break;
  }
  return c;
}

Tensor cosine_similarity_matrix(const Tensor& z) {
  require(z.rank() == 2, ErrorCode::kShapeMismatch,
          "cosine_similarity_matrix: expected [n, P], got " + shape_str(z.shape));
  const auto n = z.shape[0];
  const auto p = z.shape[1];
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t c = 0; c < p; ++c) ss += z.data[i * p + c] * z.data[i * p + c];
    require(ss > 0.0, ErrorCode::kNumeric,
            "cosine_similarity_matrix: row " + std::to_string(i) + " is zero");
    norms[i] = std::sqrt(ss);
  }
  Tensor s({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p; ++c) dot += z.data[i * p + c] * z.data[j * p + c];
      const double v = i == j ? 1.0 : dot / (norms[i] * norms[j]);
      s.data[i * n + j] = v;
      s.data[j * n + i] = v;
    }
  }
  return s;
}

double info_nce_loss(const Tensor& similarity, double temperature) {
  require(similarity.rank() == 2 && similarity.shape[0] >= 2, ErrorCode::kInvalidArgument,
          "info_nce_loss: need at least one positive pair (N >= 1)");
  Tape tape;
  const auto s = tape.constant(similarity);
  return tape.value(info_nce(tape, s, temperature)).item();
}

namespace {

// Record i as an M-antenna IQTensor, zero-padding absent antennas.
IQTensor record_tensor(const IQDataset& ds, std::size_t i, std::size_t antennas) {
  IQTensor x(antennas, ds.time);
  const auto src = ds.sample(i);
  std::copy(src.begin(), src.end(), x.values.begin());
  return x;
}

}  // namespace

PretrainResult pretrain(Encoder& encoder, const IQDataset& dataset,
                        std::span<const std::size_t> indices, const SslConfig& config,
                        const EpochCallback& on_epoch) {
  config.validate();
  require(!indices.empty(), ErrorCode::kInvalidArgument, "pretrain: no training records");
  require(dataset.antennas <= encoder.config().antennas, ErrorCode::kShapeMismatch,
          "pretrain: dataset has more antennas than the encoder");
  config.policy.validate(dataset.time);

  PretrainResult result;
  if (config.epochs == 0) return result;

  const auto M = encoder.config().antennas;
  const auto T = dataset.time;
  encoder.set_trainable(true, true);
  AdamWConfig opt_config;
  opt_config.weight_decay = config.weight_decay;
  AdamW opt(encoder.parameters(true), opt_config);

  auto order_rng = make_rng(config.seed, 0x0de7);
  auto view_rng = make_rng(config.seed, 0x71e5);
  std::vector<std::size_t> order(indices.begin(), indices.end());
  const std::size_t bs = std::min(config.batch_size, order.size());
  const std::size_t n_batches = order.size() / bs;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_anneal(config.lr, epoch, config.epochs, config.lr_min);
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      Tensor views({2 * bs, M, 2, T});
      const auto stride = M * 2 * T;
      for (std::size_t k = 0; k < bs; ++k) {
        const auto x = record_tensor(dataset, order[b * bs + k], M);
        auto [v1, v2] = sample_views(x, config.policy, view_rng);
        std::copy(v1.values.begin(), v1.values.end(),
                  views.data.begin() + static_cast<std::ptrdiff_t>((2 * k) * stride));
        std::copy(v2.values.begin(), v2.values.end(),
                  views.data.begin() + static_cast<std::ptrdiff_t>((2 * k + 1) * stride));
      }
      Tape tape;
      const auto x = tape.constant(std::move(views));
      const auto z = l2_normalize(tape, encoder.project(tape, encoder.encode(tape, x)));
      const auto s = matmul(tape, z, z, true);
      const auto loss = info_nce(tape, s, config.temperature);
      const double value = tape.value(loss).item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite InfoNCE loss at epoch " << epoch << ", batch " << b << " (lr " << lr
            << ", temperature " << config.temperature << ")";
        fail(ErrorCode::kNumeric, msg.str());
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step(lr);
      total += value;
    }
    EpochStat stat{epoch, total / static_cast<double>(n_batches), lr};
    result.trace.push_back(stat);
    if (on_epoch) on_epoch(stat);

    if (config.early_stop && result.trace.size() > config.plateau_epochs) {
      bool flat = true;
      for (std::size_t i = result.trace.size() - config.plateau_epochs; i < result.trace.size(); ++i) {
        const double prev = result.trace[i - 1].mean_loss;
        const double cur = result.trace[i].mean_loss;
        if (std::abs(cur - prev) > config.plateau_tolerance * std::max(std::abs(prev), 1e-300)) {
          flat = false;
          break;
        }
      }
      if (flat) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

void write_loss_csv(const std::vector<EpochStat>& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "epoch,mean_loss,lr\n";
  for (const auto& s : trace) out << s.epoch << ',' << s.mean_loss << ',' << s.lr << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace iqbench
