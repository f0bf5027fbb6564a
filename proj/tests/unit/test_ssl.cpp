#include <algorithm>
#include <fstream>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "iqbench/error.hpp"
#include "iqbench/generate.hpp"
#include "iqbench/ssl.hpp"
#include "support.hpp"

using namespace iqbench;
using test::random_tensor;

namespace {

// -mean_i log(exp(S_ip / tau) / sum_{k != i} exp(S_ik / tau)), p = i ^ 1.
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

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.time = 64;
  c.widths = {8, 16};
  c.strides = {2, 2};
  c.kernel = 5;
  c.embedding_dim = 32;
  c.projection_hidden = 32;
  c.projection_dim = 16;
  return c;
}

GeneratedDataset tiny_dataset() {
  SynthesisConfig sc;
  sc.time = 64;
  sc.aoa_grid_deg = aoa_grid(3);
  sc.modulations = {Modulation::kBpsk, Modulation::kQam16, Modulation::kSine, Modulation::kCw};
  sc.seed = 2;
  return build_dataset(sc, 6, 1.0);  // 72 records
}

SslConfig tiny_ssl() {
  SslConfig s;
  s.batch_size = 8;
  s.epochs = 5;
  s.lr = 1e-3;
  s.temperature = 0.5;
  s.policy = policy_preset(Task::kJoint);
  s.seed = 3;
  return s;
}

std::vector<std::size_t> first(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_CASE("cosine similarity matrix") {
  const auto same = cosine_similarity_matrix(Tensor({3, 2}, {1, 2, 1, 2, 1, 2}));
  for (double v : same.data) CHECK(std::abs(v - 1.0) < 1e-15);
  const auto orth = cosine_similarity_matrix(Tensor({2, 2}, {1, 0, 0, 1}));
  CHECK(orth.data == std::vector<double>{1, 0, 0, 1});
  const auto opp = cosine_similarity_matrix(Tensor({2, 2}, {1, 0, -1, 0}));
  CHECK(opp.data[1] == -1.0);
  CHECK_THROWS_AS(cosine_similarity_matrix(Tensor({2, 2}, {1, 0, 0, 0})), Error);
  Rng rng(1);
  const auto s = cosine_similarity_matrix(random_tensor({5, 4}, rng));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(s.data[i * 5 + i] - 1.0) < 1e-12);
    for (std::size_t j = 0; j < 5; ++j) CHECK(s.data[i * 5 + j] == s.data[j * 5 + i]);
  }
}

TEST_CASE("InfoNCE analytic values") {
  Rng rng(2);
  CHECK(info_nce_loss(Tensor({2, 2}, {1, 0.3, 0.3, 1}), 0.7) == 0.0);
  for (std::size_t n : {2, 3, 8}) {
    Tensor u({2 * n, 2 * n});
    std::fill(u.data.begin(), u.data.end(), 0.25);
    CHECK(std::abs(info_nce_loss(u, 1.5) - std::log(2.0 * n - 1.0)) < 1e-9);
  }
  Tensor hand({4, 4});
  for (std::size_t i = 0; i < 4; ++i) {
    hand.data[i * 4 + i] = 1.0;
    hand.data[i * 4 + (i ^ 1)] = 1.0;
  }
  const double oracle = brute_info_nce(hand, 1.0);
  CHECK(std::abs(info_nce_loss(hand, 1.0) - oracle) < 1e-6);
  CHECK(std::abs(oracle - (-std::log(std::exp(1.0) / (std::exp(1.0) + 2.0)))) < 1e-12);
  CHECK(std::abs(oracle - 0.5514) < 1e-4);
}

TEST_CASE("InfoNCE matches the oracle, is shift invariant and bounded") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 * (1 + trial % 5);
    Tensor s = random_tensor({n, n}, rng);
    const double tau = uniform(rng, 0.1, 2.0);
    const double l = info_nce_loss(s, tau);
    CHECK(std::abs(l - brute_info_nce(s, tau)) < 1e-9);
    Tensor shifted = s;
    for (auto& v : shifted.data) v += 0.8;
    CHECK(std::abs(info_nce_loss(shifted, tau) - l) < 1e-9);
    const auto [lo, hi] = std::minmax_element(s.data.begin(), s.data.end());
    CHECK(l >= 0.0);
    CHECK(l <= std::log(double(n) - 1.0) + (*hi - *lo) / tau + 1e-12);
  }
}

TEST_CASE("presets carry the table learning rates and temperatures") {
  CHECK(ssl_preset(Task::kMod).lr == 0.1);
  CHECK(ssl_preset(Task::kMod).temperature == 1.5);
  CHECK(ssl_preset(Task::kAoa).lr == 0.1);
  CHECK(ssl_preset(Task::kAoa).temperature == 1.5);
  CHECK(ssl_preset(Task::kJoint).lr == 0.5);
  CHECK(ssl_preset(Task::kJoint).temperature == 0.12);
}

TEST_CASE("zero epochs leave the encoder untouched") {
  const auto g = tiny_dataset();
  Encoder enc(tiny_encoder(), 1);
  const auto before = encode_checkpoint(enc.to_checkpoint());
  auto cfg = tiny_ssl();
  cfg.epochs = 0;
  const auto r = pretrain(enc, g.dataset, first(64), cfg);
  CHECK(r.trace.empty());
  CHECK(encode_checkpoint(enc.to_checkpoint()) == before);
}

TEST_CASE("tiny run learns and is reproducible") {
  const auto g = tiny_dataset();
  auto run = [&] {
    Encoder enc(tiny_encoder(), 1);
    return pretrain(enc, g.dataset, first(64), tiny_ssl()).trace;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == 5);
  CHECK(a.back().mean_loss < std::log(15.0));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].mean_loss == b[i].mean_loss);
  CHECK(a[0].lr == tiny_ssl().lr);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  const auto g = tiny_dataset();
  Encoder enc(tiny_encoder(), 1);
  enc.backbone()[0].weight.data[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    pretrain(enc, g.dataset, first(64), tiny_ssl());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
    const std::string what = e.what();
    CHECK(what.find("batch") != std::string::npos);
    CHECK(what.find("lr") != std::string::npos);
  }
}

TEST_CASE("loss csv") {
  const auto dir = test::temp_dir("ssl");
  write_loss_csv({{0, 2.5, 0.1}, {1, 2.0, 0.05}}, dir / "loss.csv");
  std::ifstream in(dir / "loss.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,mean_loss,lr");
}
