#include "iqbench/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "iqbench/error.hpp"

namespace iqbench {

const char* modulation_name(Modulation m) {
  switch (m) {
    case Modulation::kBpsk: return "BPSK";
    case Modulation::kQpsk: return "QPSK";
    case Modulation::kQam16: return "QAM16";
    case Modulation::kQam64: return "QAM64";
    case Modulation::kPam4: return "PAM4";
    case Modulation::kSine: return "SINE";
    case Modulation::kCw: return "CW";
  }
  return "?";
}

std::optional<Modulation> parse_modulation(std::string_view name) {
  for (auto m : kAllModulations) {
    if (name == modulation_name(m)) return m;
  }
  return std::nullopt;
}

void ArrayGeometry::validate() const {
  require(antennas >= 1, ErrorCode::kInvalidArgument, "array needs at least one antenna");
  require(spacing > 0.0 && std::isfinite(spacing), ErrorCode::kInvalidArgument,
          "element spacing must be positive");
  require(wavelength > 0.0 && std::isfinite(wavelength), ErrorCode::kInvalidArgument,
          "wavelength must be positive");
}

double ArrayGeometry::position(std::size_t m) const {
  require(m >= 1 && m <= antennas, ErrorCode::kInvalidArgument,
          "antenna index " + std::to_string(m) + " outside 1.." + std::to_string(antennas));
  return static_cast<double>(m - 1) * spacing;
}

double steering_phase(const ArrayGeometry& geometry, std::size_t m, double theta) {
  return 2.0 * std::numbers::pi * geometry.position(m) * std::sin(theta) / geometry.wavelength;
}

std::vector<double> default_aoa_grid() { return aoa_grid(15); }

std::vector<double> aoa_grid(std::size_t count, double lo, double hi) {
  require(count >= 1, ErrorCode::kInvalidArgument, "aoa grid needs at least one bin");
  if (count == 1) return {0.5 * (lo + hi)};
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return grid;
}

const std::vector<double>& SynthesisConfig::grid() const {
  static const std::vector<double> fallback = default_aoa_grid();
  return aoa_grid_deg.empty() ? fallback : aoa_grid_deg;
}

void SynthesisConfig::validate() const {
  geometry.validate();
  require(time >= 1, ErrorCode::kInvalidArgument, "time samples must be positive");
  require(samples_per_symbol >= 1, ErrorCode::kInvalidArgument,
          "samples_per_symbol must be positive");
  require(time % samples_per_symbol == 0, ErrorCode::kInvalidArgument,
          "time (" + std::to_string(time) + ") must be divisible by samples_per_symbol (" +
              std::to_string(samples_per_symbol) + ")");
  require(!std::isnan(snr_db), ErrorCode::kInvalidArgument, "snr_db is NaN");
  require(!modulations.empty(), ErrorCode::kInvalidArgument, "no modulations configured");
  require(gain.magnitude > 0.0, ErrorCode::kInvalidArgument, "gain magnitude must be positive");
  require(gain.magnitude_jitter >= 0.0 && gain.magnitude_jitter < 1.0,
          ErrorCode::kInvalidArgument, "gain magnitude jitter must lie in [0, 1)");
  for (double a : grid()) {
    require(a >= -90.0 && a <= 90.0, ErrorCode::kInvalidArgument,
            "azimuth " + std::to_string(a) + " outside [-90, 90] degrees");
  }
}

double IQTensor::max_abs() const {
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, std::abs(v));
  return mx;
}

std::vector<std::complex<double>> constellation(Modulation m) {
  std::vector<std::complex<double>> pts;
  auto square_qam = [&](int side) {
    for (int i = 0; i < side; ++i)
      for (int q = 0; q < side; ++q)
        pts.emplace_back(2.0 * i - (side - 1), 2.0 * q - (side - 1));
  };
  switch (m) {
    case Modulation::kBpsk: pts = {{1.0, 0.0}, {-1.0, 0.0}}; break;
    case Modulation::kQpsk:
      for (int k = 0; k < 4; ++k) {
        pts.push_back(std::polar(1.0, std::numbers::pi / 4.0 + k * std::numbers::pi / 2.0));
      }
      break;
    case Modulation::kQam16: square_qam(4); break;
    case Modulation::kQam64: square_qam(8); break;
    case Modulation::kPam4: pts = {{-3.0, 0.0}, {-1.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}}; break;
    case Modulation::kSine:
    case Modulation::kCw: return {};
  }
  double power = 0.0;
  for (auto p : pts) power += std::norm(p);
  const double s = 1.0 / std::sqrt(power / static_cast<double>(pts.size()));
  for (auto& p : pts) p *= s;
  return pts;
}

std::vector<std::complex<double>> synthesize_symbols(Modulation m, std::size_t n_symbols, Rng& rng,
                                                     double sine_cycles_per_sample) {
  require(n_symbols >= 1, ErrorCode::kInvalidArgument, "n_symbols must be >= 1");
  std::vector<std::complex<double>> out(n_symbols);
  if (m == Modulation::kCw) {
    std::fill(out.begin(), out.end(), std::complex<double>(1.0, 0.0));
    return out;
  }
  if (m == Modulation::kSine) {
    for (std::size_t k = 0; k < n_symbols; ++k) {
      out[k] = std::polar(1.0, 2.0 * std::numbers::pi * sine_cycles_per_sample *
                                   static_cast<double>(k));
    }
    return out;
  }
  const auto pts = constellation(m);
  for (auto& s : out) s = pts[uniform_index(rng, 0, pts.size() - 1)];
  return out;
}

std::vector<std::complex<double>> synthesize_waveform(const SynthesisConfig& config, Modulation m,
                                                      Rng& rng) {
  if (m == Modulation::kSine || m == Modulation::kCw) {
    return synthesize_symbols(m, config.time, rng, config.sine_cycles_per_sample);
  }
  const auto n_symbols = config.time / config.samples_per_symbol;
  const auto symbols = synthesize_symbols(m, n_symbols, rng);
  std::vector<std::complex<double>> wave(config.time);
  for (std::size_t t = 0; t < config.time; ++t) wave[t] = symbols[t / config.samples_per_symbol];
  return wave;
}

std::pair<IQTensor, SampleLabel> synthesize_sample(const SynthesisConfig& config, Modulation m,
                                                   double theta, double snr_db, Rng& rng) {
  config.validate();
  require(!std::isnan(snr_db), ErrorCode::kInvalidArgument, "snr_db is NaN");
  require(std::isfinite(theta), ErrorCode::kInvalidArgument, "theta must be finite");
  const auto& grid = config.grid();
  const double theta_deg = theta * 180.0 / std::numbers::pi;
  const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
  require(theta_deg >= *lo - 1e-9 && theta_deg <= *hi + 1e-9, ErrorCode::kInvalidArgument,
          "theta " + std::to_string(theta_deg) + " deg outside the configured azimuth grid");
  int bin = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(grid[i] - theta_deg) < std::abs(grid[static_cast<std::size_t>(bin)] - theta_deg)) {
      bin = static_cast<int>(i);
    }
  }

  double magnitude = config.gain.magnitude;
  if (config.gain.magnitude_jitter > 0.0) {
    magnitude *= uniform(rng, 1.0 - config.gain.magnitude_jitter, 1.0 + config.gain.magnitude_jitter);
  }
  const double phase = config.gain.random_phase ? uniform(rng, 0.0, 2.0 * std::numbers::pi) : 0.0;
  const auto alpha = std::polar(magnitude, phase);

  const auto wave = synthesize_waveform(config, m, rng);
  const auto M = config.geometry.antennas;
  const auto T = config.time;
  IQTensor x(M, T);

  require(snr_db > -std::numeric_limits<double>::infinity(), ErrorCode::kInvalidArgument,
          "snr_db must be above -inf");
  const bool noisy = std::isfinite(snr_db);
  const double noise_power = noisy ? magnitude * magnitude * std::pow(10.0, -snr_db / 10.0) : 0.0;
  const double noise_std = std::sqrt(noise_power / 2.0);
  for (std::size_t mi = 0; mi < M; ++mi) {
    const auto steer = std::polar(1.0, steering_phase(config.geometry, mi + 1, theta));
    for (std::size_t t = 0; t < T; ++t) {
      auto v = alpha * wave[t] * steer;
      if (noisy) v += std::complex<double>(noise_std * standard_normal(rng),
                                           noise_std * standard_normal(rng));
      x.at(mi, 0, t) = v.real();
      x.at(mi, 1, t) = v.imag();
    }
  }
  return {std::move(x), SampleLabel{m, bin, snr_db}};
}

void unit_max_normalize_inplace(std::span<double> values) {
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, std::abs(v));
  if (mx == 0.0) return;
  for (auto& v : values) v /= mx;
}

IQTensor unit_max_normalize(IQTensor x) {
  unit_max_normalize_inplace(x.values);
  return x;
}

}  // namespace iqbench
