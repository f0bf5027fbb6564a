// Acceptance run: one PASS/FAIL line per criterion.
//
//   iqbench_acceptance [--only 1,2,...]
//
// Exit status is 0 only when every selected criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iqbench/adapt.hpp"
#include "iqbench/analysis.hpp"
#include "iqbench/augment.hpp"
#include "iqbench/autograd.hpp"
#include "iqbench/checkpoint.hpp"
#include "iqbench/dataset.hpp"
#include "iqbench/digest.hpp"
#include "iqbench/encoder.hpp"
#include "iqbench/error.hpp"
#include "iqbench/generate.hpp"
#include "iqbench/optim.hpp"
#include "iqbench/pipeline.hpp"
#include "iqbench/ssl.hpp"

using namespace iqbench;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Desk-scale settings for the trained criteria.
constexpr std::size_t kPerClass = 43;         // 30 train / 13 test per (modulation, azimuth) cell
constexpr std::size_t kPretrainRecords = 1575;
constexpr std::size_t kSslEpochs = 20;
constexpr double kSslLr = 1e-3;
constexpr double kSslTemperature = 0.12;
constexpr std::size_t kSupervisedSteps = 1000;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};
const std::vector<std::size_t> kBudgets{1, 10, 200};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// Independent oracles

// O(T^2) DFT magnitude of one real row using a shared twiddle table.
struct Dft {
  std::size_t n;
  std::vector<std::complex<double>> w;
  explicit Dft(std::size_t t) : n(t), w(t) {
    for (std::size_t k = 0; k < t; ++k) w[k] = std::polar(1.0, -2.0 * std::numbers::pi * double(k) / double(t));
  }
  std::vector<double> magnitude(const IQTensor& x, std::size_t m, std::size_t c) const {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) acc += x.at(m, c, t) * w[(k * t) % n];
      out[k] = std::abs(acc);
    }
    return out;
  }
};

double brute_info_nce(const Tensor& s, double tau) {
  const std::size_t n = s.shape[0];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double den = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) den += std::exp(s.data[i * n + k] / tau);
    total += -std::log(std::exp(s.data[i * n + (i ^ 1)] / tau) / den);
  }
  return total / static_cast<double>(n);
}

double oracle_silhouette(const Tensor& x, const std::vector<int>& a) {
  const auto n = x.shape[0];
  const auto d = x.shape[1];
  const int k = *std::max_element(a.begin(), a.end()) + 1;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(k, 0.0);
    std::vector<int> cnt(k, 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) s += (x.data[i * d + q] - x.data[j * d + q]) * (x.data[i * d + q] - x.data[j * d + q]);
      sum[a[j]] += std::sqrt(s);
      cnt[a[j]]++;
    }
    if (cnt[a[i]] == 0) continue;
    const double ai = sum[a[i]] / cnt[a[i]];
    double bi = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != a[i] && cnt[c] > 0) bi = std::min(bi, sum[c] / cnt[c]);
    total += (bi - ai) / std::max(ai, bi);
  }
  return total / static_cast<double>(n);
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data) v = uniform(rng, lo, hi);
  return t;
}

using LossFn = std::function<Var(Tape&, std::vector<Var>&)>;

// ||g - g_fd|| / max(||g||, ||g_fd||), worst over parameter tensors.
double gradient_error(const LossFn& f, std::vector<Tensor*> params, double eps = 1e-6) {
  auto eval = [&] {
    Tape tape;
    std::vector<Var> vars;
    for (auto* p : params) vars.push_back(tape.parameter(*p));
    return tape.value(f(tape, vars)).item();
  };
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
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double keep = p->data[i];
      p->data[i] = keep + eps;
      const double up = eval();
      p->data[i] = keep - eps;
      const double down = eval();
      p->data[i] = keep;
      const double fd = (up - down) / (2.0 * eps);
      diff += (p->grad[i] - fd) * (p->grad[i] - fd);
      na += p->grad[i] * p->grad[i];
      nn += fd * fd;
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale > 0.0) worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

Var weighted_sum(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  const auto& v = tape.value(out);
  return sum(tape, mul(tape, out, tape.constant(random_tensor(v.shape, rng))));
}

// ---------------------------------------------------------------------------
// 1. Augmentation invariants

Outcome criterion_augment() {
  Outcome o;
  const auto t0 = Clock::now();
  SynthesisConfig sc;
  sc.snr_db = std::numeric_limits<double>::infinity();
  const auto grid = aoa_grid(15);
  const Dft dft(sc.time);
  Rng rng(101);
  double ratio_err = 0.0, fft_err = 0.0;
  bool mask_exact = true, drop_exact = true;
  for (int s = 0; s < 1000; ++s) {
    const auto mod = kAllModulations[s % kAllModulations.size()];
    const double theta = grid[uniform_index(rng, 0, grid.size() - 1)] * std::numbers::pi / 180.0;
    const auto x = synthesize_sample(sc, mod, theta, sc.snr_db, rng).first;
    const auto T = x.time, M = x.antennas;

    const auto tau = uniform_index(rng, 1, T - 1);
    const int dir = uniform_index(rng, 0, 1) ? 1 : -1;
    const auto r = time_roll(x, tau, dir);
    for (std::size_t t = 0; t < T; ++t) {
      const auto src = dir > 0 ? (t + tau) % T : (t + T - tau) % T;
      if (std::abs(x.iq(0, src)) < 1e-9) continue;
      for (std::size_t m = 1; m < M; ++m) {
        // Half-wavelength ULA: x_m / x_0 = exp(j pi m sin(theta)).
        const auto steer = std::polar(1.0, std::numbers::pi * double(m) * std::sin(theta));
        ratio_err = std::max(ratio_err, std::abs(r.iq(m, t) / r.iq(0, t) - x.iq(m, src) / x.iq(0, src)));
        ratio_err = std::max(ratio_err, std::abs(r.iq(m, t) / r.iq(0, t) - steer));
      }
    }
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < 2; ++c) {
        const auto a = dft.magnitude(x, m, c), b = dft.magnitude(r, m, c);
        for (std::size_t k = 0; k < T; ++k) fft_err = std::max(fft_err, std::abs(a[k] - b[k]));
      }

    const auto len = uniform_index(rng, 1, 200);
    const auto start = uniform_index(rng, 0, T - len);
    std::vector<std::uint8_t> mask(T, 1);
    for (std::size_t t = start; t < start + len; ++t) mask[t] = 0;
    const auto y = channel_mask(x, mask);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) {
        if (!mask[t]) {
          mask_exact &= y.at(m, 0, t) == 0.0 && y.at(m, 1, t) == 0.0;
          continue;
        }
        if (m > 0 && std::abs(x.iq(0, t)) > 0.0) mask_exact &= y.iq(m, t) / y.iq(0, t) == x.iq(m, t) / x.iq(0, t);
        mask_exact &= y.at(m, 0, t) == x.at(m, 0, t) && y.at(m, 1, t) == x.at(m, 1, t);
      }
    }

    std::vector<std::size_t> dropped;
    for (std::size_t m = 0; m < M; ++m)
      if (uniform(rng, 0, 1) < 0.5) dropped.push_back(m);
    if (dropped.size() == M) dropped.pop_back();
    const auto z = channel_drop(x, dropped);
    for (std::size_t m = 0; m < M; ++m) {
      const bool gone = std::find(dropped.begin(), dropped.end(), m) != dropped.end();
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t t = 0; t < T; ++t) drop_exact &= z.at(m, c, t) == (gone ? 0.0 : x.at(m, c, t));
    }
  }
  const double secs = seconds_since(t0);
  o.require(ratio_err < 1e-9, "time-roll ratio error " + fmt(ratio_err));
  o.require(fft_err < 1e-9, "FFT magnitude deviation " + fmt(fft_err));
  o.require(mask_exact, "mask unmasked ratios exact");
  o.require(drop_exact, "drop survivors bit-exact");
  o.require(secs < 60.0, "runtime " + fmt(secs) + " s");
  o.note("ratio err " + fmt(ratio_err) + ", fft dev " + fmt(fft_err) + ", " + fmt(secs) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 2. Gradient exactness

Outcome criterion_gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr int kTrials = 20;
  constexpr double kTol = 1e-4;
  std::map<std::string, double> worst;
  auto track = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };
  Rng rng(202);
  const Conv2dGeometry geoms[] = {{1, 1, 0, 0}, {1, 2, 0, 1}, {2, 1, 1, 0}, {1, 2, 0, 3}};
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::uint64_t ws = 1000 + trial;
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    const double s = uniform(rng, -2, 2);
    track("add", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, add(t, v[0], v[1]), ws); }, {&a, &b}));
    track("mul", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, mul(t, v[0], v[1]), ws); }, {&a, &b}));
    track("scale", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, scale(t, v[0], s), ws); }, {&a}));
    track("mean", gradient_error([&](Tape& t, auto& v) { return mean(t, mul(t, v[0], v[0])); }, {&a}));
    track("sum", gradient_error([&](Tape& t, auto& v) { return sum(t, mul(t, v[0], v[1])); }, {&a, &b}));
    track("relu", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, relu(t, v[0]), ws); }, {&a}));
    track("reshape", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, reshape(t, v[0], {2, 6}), ws); }, {&a}));

    Tensor x = random_tensor({4, 5}, rng), w = random_tensor({3, 5}, rng), bias = random_tensor({3}, rng);
    Tensor m = random_tensor({5, 2}, rng);
    track("linear", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, linear(t, v[0], v[1], v[2]), ws); }, {&x, &w, &bias}));
    track("matmul", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, matmul(t, v[0], v[1]), ws); }, {&x, &m}));
    track("matmul_t", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, matmul(t, v[0], v[1], true), ws); }, {&x, &w}));

    const auto& g = geoms[trial % 4];
    const std::size_t kh = trial % 2 ? 2 : 1;
    Tensor cx = random_tensor({2, 3, 2, 9}, rng), cw = random_tensor({4, 3, kh, 3}, rng), cb = random_tensor({4}, rng);
    track("conv2d", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, conv2d(t, v[0], v[1], v[2], g), ws); }, {&cx, &cw, &cb}));

    Tensor px = random_tensor({2, 3, 1, 6}, rng), z = random_tensor({4, 5}, rng);
    track("global_avg_pool", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, global_avg_pool(t, v[0]), ws); }, {&px}));
    track("l2_normalize", gradient_error([&](Tape& t, auto& v) { return weighted_sum(t, l2_normalize(t, v[0]), ws); }, {&z}));

    Tensor sim = random_tensor({6, 6}, rng), logits = random_tensor({5, 4}, rng);
    const double tau = uniform(rng, 0.2, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(uniform_index(rng, 0, 3)));
    track("info_nce", gradient_error([&](Tape& t, auto& v) { return info_nce(t, v[0], tau); }, {&sim}));
    track("softmax_cross_entropy", gradient_error([&](Tape& t, auto& v) { return softmax_cross_entropy(t, v[0], labels); }, {&logits}));

    EncoderConfig ec;
    ec.antennas = 2;
    ec.time = 16;
    ec.widths = {3, 4};
    ec.strides = {2, 2};
    ec.kernel = 3;
    ec.embedding_dim = 5;
    ec.projection_hidden = 4;
    ec.projection_dim = 3;
    Encoder enc(ec, 300 + trial);
    enc.set_trainable(true, true);
    const Tensor ex = random_tensor({2, 2, 2, 16}, rng);
    std::vector<Tensor*> params;
    for (auto& p : enc.parameters(true)) params.push_back(p.tensor);
    // Parameters are read through the encoder; the bound vars only carry gradients.
    track("encoder", gradient_error([&](Tape& t, auto&) {
            return weighted_sum(t, enc.project(t, enc.encode(t, t.constant(ex))), ws);
          }, params));
  }
  for (const auto& [name, e] : worst) o.require(e < kTol, name + " relative error " + fmt(e));
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + fmt(secs) + " s");
  double overall = 0.0;
  for (const auto& [name, e] : worst) overall = std::max(overall, e);
  o.note(std::to_string(worst.size()) + " kernels x " + std::to_string(kTrials) + " trials, worst " + fmt(overall) +
         ", " + fmt(secs) + " s");
  return o;
}

// ---------------------------------------------------------------------------
// 3. InfoNCE analytic values

Outcome criterion_info_nce() {
  Outcome o;
  const double single = info_nce_loss(Tensor({2, 2}, {1.0, 0.4, 0.4, 1.0}), 0.5);
  o.require(single == 0.0, "N=1 loss " + fmt(single));
  double uniform_err = 0.0;
  for (std::size_t n : {2, 4, 16, 64}) {
    Tensor u({2 * n, 2 * n});
    std::fill(u.data.begin(), u.data.end(), 0.3);
    uniform_err = std::max(uniform_err, std::abs(info_nce_loss(u, 0.12) - std::log(2.0 * n - 1.0)));
  }
  o.require(uniform_err < 1e-9, "uniform similarity error " + fmt(uniform_err));
  Tensor hand({4, 4});
  for (std::size_t i = 0; i < 4; ++i) {
    hand.data[i * 4 + i] = 1.0;
    hand.data[i * 4 + (i ^ 1)] = 1.0;
  }
  const double got = info_nce_loss(hand, 1.0);
  const double oracle = brute_info_nce(hand, 1.0);
  o.require(std::abs(got - oracle) < 1e-6, "hand case " + fmt(got, 8) + " vs oracle " + fmt(oracle, 8));
  o.require(std::abs(oracle - 0.5514) < 1e-4, "hand case value " + fmt(oracle, 6));
  o.note("hand case " + fmt(got, 6) + ", uniform err " + fmt(uniform_err));
  return o;
}

// ---------------------------------------------------------------------------
// 4. Schedule and optimizer

Outcome criterion_optimizer() {
  Outcome o;
  for (std::size_t total : {1, 20, 100}) {
    const double end = cosine_anneal(0.1, total, total, 1e-7);
    o.require(end == 1e-7, "cosine_anneal(total) = " + fmt(end, 17));
  }
  double err = 0.0;
  {
    Tensor p({3}, {1.0, -2.0, 0.5}, true);
    p.zero_grad();
    std::vector<NamedTensor> params{{"p", &p}};
    auto st = make_optimizer_state(params, {0.9, 0.999, 1e-8, 0.0});
    adamw_step(params, st, 0.1);
    err = std::max({err, std::abs(p.data[0] - 1.0), std::abs(p.data[1] + 2.0), std::abs(p.data[2] - 0.5)});
  }
  {
    Tensor p({2}, {2.0, -4.0}, true);
    p.zero_grad();
    std::vector<NamedTensor> params{{"p", &p}};
    auto st = make_optimizer_state(params, {0.9, 0.999, 1e-8, 1e-2});
    const double lr = 0.05;
    adamw_step(params, st, lr);
    err = std::max({err, std::abs(p.data[0] - 2.0 * (1.0 - lr * 1e-2)), std::abs(p.data[1] + 4.0 * (1.0 - lr * 1e-2))});
  }
  o.require(err <= 1e-12, "AdamW hand computation error " + fmt(err));
  o.note("AdamW max error " + fmt(err));
  return o;
}

// ---------------------------------------------------------------------------
// 5. LoRA identity

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome criterion_lora() {
  Outcome o;
  Rng rng(505);
  Encoder enc(EncoderConfig{}, 5);
  auto stack = lora_wrap(enc, LoraConfig{}, 6);
  double identity = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto x = random_tensor({1, 4, 2, 256}, rng);
    identity = std::max(identity, max_abs_diff(embed(enc, x).data, embed(enc, x, stack.hook()).data));
  }
  o.require(identity <= 1e-12, "zero-init deviation " + fmt(identity));

  LoraConfig lc;
  lc.rank = 2;
  lc.alpha = 4.0;
  lc.wrap_linear = true;
  auto wide = lora_wrap(enc, lc, 7);
  for (auto& ad : wide.adapters())
    for (auto& v : ad.b.data) v = uniform(rng, -0.05, 0.05);
  auto merged = wide.merged();
  double merge = 0.0, shift = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto x = random_tensor({2, 4, 2, 256}, rng);
    const auto adapted = embed(enc, x, wide.hook());
    merge = std::max(merge, max_abs_diff(embed(merged, x).data, adapted.data));
    shift = std::max(shift, max_abs_diff(embed(enc, x).data, adapted.data));
  }
  o.require(merge <= 1e-9, "merge deviation " + fmt(merge));
  o.require(shift > 1e-6, "nonzero adapters left the output unchanged");

  SynthesisConfig sc;
  sc.time = 256;
  sc.aoa_grid_deg = aoa_grid(3);
  sc.seed = 8;
  const auto g = build_dataset(sc, 6);
  const auto labels = g.dataset.label_column("modulation");
  const auto before = enc.digest();
  auto adapters = lora_wrap(enc, LoraConfig{}, 9);
  auto model = make_classifier(enc, &adapters, 7, 10);
  auto opts = lora_defaults();
  opts.epochs = 5;
  train_lora(model, g.dataset, g.split.train, labels, opts);
  double moved = 0.0;
  for (const auto& ad : adapters.adapters())
    for (double v : ad.b.data) moved = std::max(moved, std::abs(v));
  o.require(enc.digest() == before, "base digest changed by LoRA training");
  o.require(moved > 0.0, "adapters did not train");
  o.note("identity " + fmt(identity) + ", merge " + fmt(merge) + " (adapter shift " + fmt(shift) + "), digest " + hex_digest(before));
  return o;
}

// ---------------------------------------------------------------------------
// Shared desk-scale experiment (criteria 6-9)

struct Desk {
  GeneratedDataset data;
  std::vector<int> mod, aoa;
  std::size_t mod_classes = 0, aoa_classes = 0;
  EncoderConfig encoder;
  // acc[arm][task][k] per seed; arms: mod, aoa, joint, supervised.
  std::map<std::string, std::map<std::string, std::map<std::size_t, std::vector<double>>>> acc;
  std::vector<Encoder> mod_encoders;
  double seconds = 0.0;
};

const std::vector<int>& labels_for(const Desk& d, const std::string& task) {
  return task == "mod" ? d.mod : d.aoa;
}

Tensor rows(const Tensor& h, std::span<const std::size_t> idx) {
  const auto dim = h.shape[1];
  Tensor out({idx.size(), dim});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(h.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * dim), dim,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * dim));
  return out;
}

double probe(const Tensor& h, const std::vector<int>& labels, std::size_t classes,
             const SplitManifest& split, std::size_t k, std::uint64_t seed) {
  const auto fs_split = few_shot_split(labels, split.train, split.test, k, seed);
  std::vector<int> ytr, yte;
  for (auto i : fs_split.train) ytr.push_back(labels[i]);
  for (auto i : fs_split.test) yte.push_back(labels[i]);
  auto opts = probe_defaults();
  opts.seed = seed;
  const auto head = train_linear_probe(rows(h, fs_split.train), ytr, classes, opts, nullptr, true);
  return evaluate(head.predict(rows(h, fs_split.test)), yte, classes).accuracy;
}

std::vector<std::size_t> pretrain_subset(const SplitManifest& split, std::uint64_t seed) {
  std::vector<std::size_t> idx = split.train;
  if (idx.size() > kPretrainRecords) {
    auto rng = make_rng(seed, 0x5ab5e7);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(kPretrainRecords);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

SslConfig desk_ssl(Task task, std::uint64_t seed) {
  auto s = ssl_preset(task);
  s.lr = kSslLr;
  s.temperature = kSslTemperature;
  s.epochs = kSslEpochs;
  s.seed = derive_seed(seed, 2);
  return s;
}

Encoder pretrained(const Desk& d, const SslConfig& ssl, std::uint64_t seed) {
  Encoder enc(d.encoder, derive_seed(seed, 1));
  const auto idx = pretrain_subset(d.data.split, seed);
  const auto r = pretrain(enc, d.data.dataset, idx, ssl);
  std::printf("    pretrain seed %llu cd %.2f cm %.2f tr %zu: loss %.4f -> %.4f\n",
              static_cast<unsigned long long>(seed), ssl.policy.cd_prob, ssl.policy.cm_prob, ssl.policy.tr_len,
              r.trace.front().mean_loss, r.trace.back().mean_loss);
  std::fflush(stdout);
  return enc;
}

Desk& desk() {
  static Desk d = [] {
    Desk d;
    const auto t0 = Clock::now();
    SynthesisConfig sc;
    sc.time = 256;
    sc.snr_db = 10.0;
    sc.aoa_grid_deg = aoa_grid(15);
    sc.gain.random_phase = true;
    sc.seed = 2024;
    d.data = build_dataset(sc, kPerClass);
    d.mod = d.data.dataset.label_column("modulation");
    d.aoa = d.data.dataset.label_column("aoa_bin");
    d.mod_classes = 7;
    d.aoa_classes = 15;
    d.encoder.antennas = 4;
    d.encoder.time = 256;
    std::printf("  dataset: %zu records, %zu train, %zu test\n", d.data.dataset.count,
                d.data.split.train.size(), d.data.split.test.size());

    std::vector<std::size_t> all(d.data.dataset.count);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const std::pair<std::string, Task> arms[] = {{"mod", Task::kMod}, {"aoa", Task::kAoa}, {"joint", Task::kJoint}};
    for (auto seed : kSeeds) {
      for (const auto& [arm, task] : arms) {
        auto enc = pretrained(d, desk_ssl(task, seed), seed);
        const auto h = embed_dataset(enc, d.data.dataset, all);
        for (const std::string t : {"mod", "aoa"})
          for (auto k : kBudgets)
            d.acc[arm][t][k].push_back(probe(h, labels_for(d, t), t == "mod" ? 7 : 15, d.data.split, k, seed));
        if (arm == "mod") d.mod_encoders.push_back(std::move(enc));
      }
      for (const std::string t : {"mod", "aoa"}) {
        const auto& labels = labels_for(d, t);
        const std::size_t classes = t == "mod" ? 7 : 15;
        for (auto k : kBudgets) {
          const auto split = few_shot_split(labels, d.data.split.train, d.data.split.test, k, seed);
          auto opts = supervised_defaults();
          opts.seed = seed;
          const auto steps = (split.train.size() + opts.batch_size - 1) / opts.batch_size;
          opts.epochs = std::clamp<std::size_t>((kSupervisedSteps + steps - 1) / steps, 10, 100);
          Encoder enc(d.encoder, derive_seed(seed, 5));
          auto model = make_classifier(enc, nullptr, classes, derive_seed(seed, 4));
          train_supervised_baseline(model, d.data.dataset, split.train, labels, opts);
          std::vector<int> yte;
          for (auto i : split.test) yte.push_back(labels[i]);
          d.acc["supervised"][t][k].push_back(evaluate(model.predict(d.data.dataset, split.test), yte, classes).accuracy);
        }
      }
      std::printf("    seed %llu done at %.0f s\n", static_cast<unsigned long long>(seed), seconds_since(t0));
      std::fflush(stdout);
    }
    d.seconds = seconds_since(t0);
    std::printf("  accuracy (seed median), k = 1 / 10 / 200:\n");
    for (const std::string arm : {"mod", "aoa", "joint", "supervised"})
      for (const std::string t : {"mod", "aoa"}) {
        std::printf("    %-10s %-3s", arm.c_str(), t.c_str());
        for (auto k : kBudgets) std::printf(" %.3f", median(d.acc[arm][t][k]));
        std::printf("\n");
      }
    std::fflush(stdout);
    return d;
  }();
  return d;
}

double med(const std::string& arm, const std::string& task, std::size_t k) {
  return median(desk().acc[arm][task][k]);
}

// ---------------------------------------------------------------------------
// 6. Table III ordering

Outcome criterion_ordering() {
  Outcome o;
  auto& d = desk();
  for (const std::string t : {"mod", "aoa"}) {
    for (std::size_t k : {1, 10}) {
      const double spec = med(t, t, k), joint = med("joint", t, k), sup = med("supervised", t, k);
      o.require(spec - joint >= 0.05, t + " k=" + std::to_string(k) + ": specific " + fmt(spec) +
                                          " - joint " + fmt(joint) + " < 5 points");
      o.require(joint - sup >= 0.05, t + " k=" + std::to_string(k) + ": joint " + fmt(joint) +
                                         " - supervised " + fmt(sup) + " < 5 points");
    }
    const double a = med(t, t, 200), b = med("joint", t, 200), c = med("supervised", t, 200);
    const double spread = std::max({a, b, c}) - std::min({a, b, c});
    o.require(spread <= 0.10, t + " k=200 spread " + fmt(spread));
  }
  o.note("desk run " + fmt(d.seconds, 4) + " s");
  return o;
}

// 7. Cross-task mismatch at k = 10

Outcome criterion_mismatch() {
  Outcome o;
  const double aoa_own = med("aoa", "aoa", 10), aoa_cross = med("mod", "aoa", 10);
  const double mod_own = med("mod", "mod", 10), mod_cross = med("aoa", "mod", 10);
  o.require(aoa_cross < 0.5 * aoa_own, "AoA: TR+CD " + fmt(aoa_cross) + " vs TR+CM " + fmt(aoa_own));
  o.require(mod_cross < 0.5 * mod_own, "modulation: TR+CM " + fmt(mod_cross) + " vs TR+CD " + fmt(mod_own));
  o.note("AoA " + fmt(aoa_cross) + "/" + fmt(aoa_own) + ", modulation " + fmt(mod_cross) + "/" + fmt(mod_own));
  return o;
}

// 8. Clustering suite

Outcome criterion_clustering() {
  Outcome o;
  Rng rng(808);
  double sil = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20 + 20 * trial;  // up to 200
    const auto x = random_tensor({n, 4}, rng);
    std::vector<int> a(n);
    const int k = 2 + trial % 6;
    for (auto& v : a) v = static_cast<int>(uniform_index(rng, 0, k - 1));
    a[0] = 0;
    a[1] = 1;
    sil = std::max(sil, std::abs(silhouette_score(x, a) - oracle_silhouette(x, a)));
  }
  o.require(sil < 1e-9, "silhouette oracle deviation " + fmt(sil));

  Tensor centers({7, 5});
  for (auto& v : centers.data) v = uniform(rng, -20, 20);
  Tensor blobs({7 * 30, 5});
  std::vector<int> truth;
  for (std::size_t c = 0; c < 7; ++c)
    for (std::size_t i = 0; i < 30; ++i) {
      for (std::size_t q = 0; q < 5; ++q)
        blobs.data[(c * 30 + i) * 5 + q] = centers.data[c * 5 + q] + 0.5 * standard_normal(rng);
      truth.push_back(static_cast<int>(c));
    }
  std::vector<std::size_t> ks;
  for (std::size_t k = 2; k <= 12; ++k) ks.push_back(k);
  const auto sweep = silhouette_sweep(blobs, ks, 1);
  o.require(sweep.best_k == 7, "blob sweep best_k " + std::to_string(sweep.best_k));
  std::vector<std::size_t> anchors;
  for (std::size_t c = 0; c < 7; ++c) anchors.push_back(c * 30 + uniform_index(rng, 0, 29));
  const double pure = pseudo_label(blobs, anchors, kmeans(blobs, 7, 2), truth).accuracy;
  o.require(pure == 1.0, "pure-cluster pseudo-label accuracy " + fmt(pure));

  auto& d = desk();
  std::vector<std::size_t> all(d.data.dataset.count);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<double> mod_acc, aoa_acc;
  for (std::size_t s = 0; s < d.mod_encoders.size(); ++s) {
    const auto h = embed_dataset(d.mod_encoders[s], d.data.dataset, all);
    for (const std::string t : {"mod", "aoa"}) {
      const auto& labels = labels_for(d, t);
      const std::size_t classes = t == "mod" ? 7 : 15;
      auto arng = make_rng(kSeeds[s], 0xa1c4);
      std::vector<std::size_t> anc(classes);
      for (std::size_t c = 0; c < classes; ++c) {
        std::vector<std::size_t> pool;
        for (auto i : d.data.split.train)
          if (labels[i] == static_cast<int>(c)) pool.push_back(i);
        anc[c] = pool[uniform_index(arng, 0, pool.size() - 1)];
      }
      const auto cl = kmeans(h, classes, kSeeds[s]);
      (t == "mod" ? mod_acc : aoa_acc).push_back(pseudo_label(h, anc, cl, labels).accuracy);
    }
  }
  const double mod_pl = median(mod_acc), aoa_pl = median(aoa_acc);
  o.require(mod_pl > 0.95, "modulation pseudo-label accuracy " + fmt(mod_pl));
  o.require(aoa_pl < 2.0 / 15.0, "AoA pseudo-label accuracy " + fmt(aoa_pl) + " vs 2x chance " + fmt(2.0 / 15.0));
  o.note("silhouette dev " + fmt(sil) + ", best_k " + std::to_string(sweep.best_k) + ", mod-encoder pseudo-labels: mod " +
         fmt(mod_pl) + ", AoA " + fmt(aoa_pl));
  return o;
}

// 9. Sweep direction

Outcome criterion_sweep() {
  Outcome o;
  auto& d = desk();
  std::vector<std::size_t> all(d.data.dataset.count);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<double> hi, lo;
  for (auto seed : kSeeds) {
    for (double cd : {0.9, 0.01}) {
      auto ssl = desk_ssl(Task::kMod, seed);
      ssl.policy.cd_prob = cd;
      ssl.policy.tr_len = 60;
      auto enc = pretrained(d, ssl, seed);
      const auto h = embed_dataset(enc, d.data.dataset, all);
      (cd > 0.5 ? hi : lo).push_back(probe(h, d.mod, 7, d.data.split, 50, seed));
    }
  }
  const double a = median(hi), b = median(lo);
  o.require(a - b >= 0.10, "cd 0.9 " + fmt(a) + " vs cd 0.01 " + fmt(b));
  o.note("modulation probe (k=50 -> all train): cd 0.9 " + fmt(a) + ", cd 0.01 " + fmt(b));
  return o;
}

// ---------------------------------------------------------------------------
// 10. Persistence

std::map<std::string, std::string> digests(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = hex_digest(file_digest(e.path()));
  return out;
}

Outcome criterion_persistence() {
  Outcome o;
  Rng rng(1010);
  bool exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    IQDataset ds;
    ds.count = uniform_index(rng, 1, 20);
    ds.antennas = uniform_index(rng, 1, 8);
    ds.time = uniform_index(rng, 1, 600);
    ds.samples.resize(ds.count * ds.antennas * 2 * ds.time);
    for (auto& v : ds.samples) v = static_cast<float>(uniform(rng, -3, 3));
    const auto fields = uniform_index(rng, 0, 3);
    for (std::size_t f = 0; f < fields; ++f) ds.label_fields.push_back("f" + std::to_string(f));
    for (std::size_t i = 0; i < ds.count * fields; ++i) ds.labels.push_back(static_cast<std::int32_t>(uniform_index(rng, 0, 50)));
    const auto bytes = encode_dataset(ds);
    const auto back = decode_dataset(bytes);
    exact &= back.samples == ds.samples && back.labels == ds.labels && back.count == ds.count &&
             back.antennas == ds.antennas && back.time == ds.time && encode_dataset(back) == bytes;
  }
  o.require(exact, "IQDS roundtrip");

  const auto dir = fs::temp_directory_path() / "iqbench_acceptance_persist";
  auto run = [&] {
    fs::remove_all(dir);
    RunConfig c;
    c.output_dir = dir;
    c.seed = 11;
    c.synthesis.per_class = 3;
    c.synthesis.aoa_bins = 5;
    c.encoder.widths = {8, 16, 32};
    c.encoder.embedding_dim = 32;
    c.encoder.projection_hidden = 32;
    c.encoder.projection_dim = 16;
    c.ssl.epochs = 2;
    c.ssl.batch_size = 16;
    c.ssl.lr = 1e-3;
    c.adapt.k = 2;
    c.adapt.epochs = 5;
    cmd_gen(c);
    cmd_pretrain(c);
    for (const char* m : {"probe", "lora", "supervised"}) {
      c.adapt.method = m;
      cmd_adapt(c);
    }
    return digests(dir);
  };
  const auto a = run();
  const auto b = run();
  for (const char* f : {"dataset.iqds", "dataset.split.json", "encoder.iqck", "metrics_probe_modulation_k2_s0.json",
                        "metrics_lora_modulation_k2_s0.json", "metrics_supervised_modulation_k2_s0.json"})
    o.require(a.count(f) && a.at(f) == b.at(f), std::string("digest of ") + f);
  o.require(a == b, "every output file digest");
  fs::remove_all(dir);
  o.note(std::to_string(a.size()) + " files reproduced, checkpoint " + (a.count("encoder.iqck") ? a.at("encoder.iqck") : "?"));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"augmentation invariants", criterion_augment},
      {"gradient exactness", criterion_gradients},
      {"InfoNCE analytic values", criterion_info_nce},
      {"schedule and optimizer", criterion_optimizer},
      {"LoRA identity", criterion_lora},
      {"ordering of task-specific, joint and supervised", criterion_ordering},
      {"cross-task mismatch", criterion_mismatch},
      {"clustering suite", criterion_clustering},
      {"sweep direction", criterion_sweep},
      {"persistence", criterion_persistence}};
  int failed = 0;
  std::vector<std::string> summary;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("exception: ") + e.what());
    }
    std::string line = (o.pass ? "PASS" : "FAIL") + std::string(" criterion ") + std::to_string(id) + " (" +
                       criteria[i].first + ")";
    for (const auto& n : o.notes) line += "; " + n;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    summary.push_back(line);
    failed += o.pass ? 0 : 1;
  }
  std::printf("\nsummary:\n");
  for (const auto& s : summary) std::printf("%s\n", s.c_str());
  std::printf("%d of %zu criteria failed\n", failed, summary.size());
  return failed == 0 ? 0 : 1;
}
