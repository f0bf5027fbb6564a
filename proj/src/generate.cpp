#include "iqbench/generate.hpp"

#include <numbers>
#include <sstream>

#include "iqbench/error.hpp"
#include "iqbench/rng.hpp"

namespace iqbench {

GeneratedDataset build_dataset(const SynthesisConfig& config, std::size_t per_class_count,
                               double train_fraction) {
  config.validate();
  require(per_class_count >= 1, ErrorCode::kInvalidArgument, "per_class_count must be >= 1");
  const auto& grid = config.grid();
  const auto n_mod = config.modulations.size();
  const auto n_aoa = grid.size();

  GeneratedDataset out;
  auto& ds = out.dataset;
  ds.count = n_mod * n_aoa * per_class_count;
  ds.antennas = config.geometry.antennas;
  ds.time = config.time;
  ds.label_fields = {"modulation", "aoa_bin"};
  ds.samples.resize(ds.count * ds.sample_size());
  ds.labels.resize(ds.count * 2);
  std::ostringstream prov;
  prov << "synthetic ULA M=" << ds.antennas << " T=" << ds.time
       << " sps=" << config.samples_per_symbol << " snr_db=" << config.snr_db
       << " aoa_bins=" << n_aoa << " per_class=" << per_class_count << " seed=" << config.seed;
  ds.provenance = prov.str();

  std::vector<int> cells(ds.count);
  std::size_t r = 0;
  for (std::size_t mi = 0; mi < n_mod; ++mi) {
    for (std::size_t ai = 0; ai < n_aoa; ++ai) {
      const double theta = grid[ai] * std::numbers::pi / 180.0;
      for (std::size_t c = 0; c < per_class_count; ++c, ++r) {
        auto rng = make_rng(config.seed, r);
        auto [x, label] = synthesize_sample(config, config.modulations[mi], theta, config.snr_db, rng);
        unit_max_normalize_inplace(x.values);
        auto dst = ds.samples.begin() + static_cast<std::ptrdiff_t>(r * ds.sample_size());
        for (double v : x.values) *dst++ = static_cast<double>(static_cast<float>(v));
        ds.labels[2 * r] = static_cast<std::int32_t>(mi);
        ds.labels[2 * r + 1] = label.aoa_bin;
        cells[r] = static_cast<int>(mi * n_aoa + ai);
      }
    }
  }
  out.split = stratified_split(cells, train_fraction, config.seed);
  return out;
}

GeneratedDataset build_dataset_file(const SynthesisConfig& config, std::size_t per_class_count,
                                    const std::filesystem::path& path, double train_fraction) {
  auto out = build_dataset(config, per_class_count, train_fraction);
  write_dataset(out.dataset, path);
  write_split(out.split, split_path_for(path));
  return out;
}

}  // namespace iqbench
