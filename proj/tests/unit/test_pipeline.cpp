#include <fstream>
#include <map>
#include <string>

#include "doctest.h"
#include "iqbench/digest.hpp"
#include "iqbench/error.hpp"
#include "iqbench/pipeline.hpp"
#include "support.hpp"

using namespace iqbench;
namespace fs = std::filesystem;

namespace {

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.output_dir = out;
  c.seed = 5;
  c.synthesis.time = 64;
  c.synthesis.per_class = 2;
  c.synthesis.aoa_bins = 3;
  c.encoder.widths = {4, 6};
  c.encoder.strides = {2, 2};
  c.encoder.kernel = 3;
  c.encoder.embedding_dim = 8;
  c.encoder.projection_hidden = 8;
  c.encoder.projection_dim = 4;
  c.ssl.batch_size = 8;
  c.ssl.epochs = 1;
  c.ssl.lr = 1e-3;
  c.adapt.epochs = 2;
  c.sweep.epochs = 1;
  c.sweep.k = 1;
  c.ablate.epochs = 1;
  c.ablate.budgets = {1, 2, 3};
  c.analysis.k_max = 6;
  c.ablate.cm_len = 20;
  return c;
}

std::size_t lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string s; std::getline(in, s);) ++n;
  return n;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

std::map<std::string, std::string> digests(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.find(".config.json") != std::string::npos || name.rfind("report", 0) == 0 ||
        name.rfind("metrics_", 0) == 0)
      continue;
    out[name] = hex_digest(file_digest(e.path()));
  }
  return out;
}

}  // namespace

TEST_CASE("zero-epoch pretrain writes the random initialisation") {
  auto c = tiny(test::temp_dir("pipe_zero"));
  c.ssl.epochs = 0;
  cmd_gen(c);
  cmd_pretrain(c);
  const auto ck = read_checkpoint(c.checkpoint_path());
  auto ec = c.encoder;
  ec.antennas = 4;
  ec.time = 64;
  Encoder fresh(ec, derive_seed(c.seed, 1));
  Encoder loaded = Encoder::from_checkpoint(ck);
  CHECK(loaded.digest() == fresh.digest());
  CHECK(lines(c.output_dir / "pretrain_loss.csv") == 1);
}

TEST_CASE("sweep and ablation grids") {
  auto c = tiny(test::temp_dir("pipe_grid"));
  cmd_gen(c);
  const auto s = cmd_sweep(c);
  CHECK(s["cells"].size() == 9);
  CHECK(lines(c.output_dir / "sweep.csv") == 10);
  CHECK(first_line(c.output_dir / "sweep.csv") == "cd_prob,tr_len,accuracy");
  const auto a = cmd_ablate(c);
  CHECK(a["rows"].size() == 6);
  CHECK(lines(c.output_dir / "ablation.csv") == 7);
  CHECK(first_line(c.output_dir / "ablation.csv") ==
        "time_rolling,masking,dropping,aoa_1,aoa_2,aoa_3,mod_1,mod_2,mod_3");
  CHECK(a["rows"][3]["time_rolling"] == true);
  CHECK(a["rows"][3]["masking"] == true);
  CHECK(a["rows"][3]["dropping"] == false);
}

TEST_CASE("cluster outputs and record-count guard") {
  auto c = tiny(test::temp_dir("pipe_cluster"));
  cmd_gen(c);
  cmd_pretrain(c);
  const auto r = cmd_cluster(c);
  CHECK(r["best_k"].get<int>() >= 2);
  CHECK(lines(c.output_dir / "silhouette.csv") == 6);
  CHECK(r["pseudo_labels"].contains("modulation"));
  CHECK(r["pseudo_labels"]["aoa_bin"]["classes"] == 3);
  CHECK(lines(c.output_dir / "pca.csv") == 43);
  c.analysis.max_records = 5;
  CHECK_THROWS_AS(cmd_cluster(c), Error);
}

TEST_CASE("a seeded pipeline is byte-identical across runs") {
  auto run = [](const fs::path& dir) {
    auto c = tiny(dir);
    cmd_gen(c);
    cmd_pretrain(c);
    c.adapt.method = "lora";
    cmd_adapt(c);
    cmd_cluster(c);
    return digests(dir);
  };
  const auto a = run(test::temp_dir("pipe_a"));
  const auto b = run(test::temp_dir("pipe_b"));
  CHECK(a.size() >= 8);
  CHECK(a == b);
}

TEST_CASE("report collects metrics") {
  auto c = tiny(test::temp_dir("pipe_report"));
  cmd_gen(c);
  cmd_pretrain(c);
  cmd_adapt(c);
  c.task = "aoa";
  cmd_adapt(c);
  const auto r = cmd_report(c);
  CHECK(r["metrics"].size() == 2);
  CHECK(lines(c.output_dir / "report.csv") == 3);
  CHECK(r["digests"].contains("encoder.iqck"));
  CHECK_THROWS_AS(run_command("train", c), Error);
}
