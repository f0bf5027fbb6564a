#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "iqbench/rng.hpp"

namespace iqbench {

enum class Modulation { kBpsk, kQpsk, kQam16, kQam64, kPam4, kSine, kCw };

inline constexpr std::array<Modulation, 7> kAllModulations = {
    Modulation::kBpsk, Modulation::kQpsk, Modulation::kQam16, Modulation::kQam64,
    Modulation::kPam4, Modulation::kSine, Modulation::kCw};

const char* modulation_name(Modulation m);
std::optional<Modulation> parse_modulation(std::string_view name);

/// Uniform linear array; element m (1-based) sits at (m - 1) * spacing.
struct ArrayGeometry {
  std::size_t antennas = 4;
  double spacing = 0.5;     // meters
  double wavelength = 1.0;  // meters

  void validate() const;
  double position(std::size_t m) const;
};

// 2 pi p_m sin(theta) / lambda, m is 1-based.
double steering_phase(const ArrayGeometry& geometry, std::size_t m, double theta);

struct GainModel {
  double magnitude = 1.0;
  bool random_phase = false;
  double magnitude_jitter = 0.0;  // relative, uniform in [1 - j, 1 + j]
};

struct SynthesisConfig {
  ArrayGeometry geometry;
  std::size_t time = 256;
  std::size_t samples_per_symbol = 8;
  std::vector<double> aoa_grid_deg;  // empty -> default -70..70 step 10
  double snr_db = 10.0;
  GainModel gain;
  double sine_cycles_per_sample = 0.05;
  std::vector<Modulation> modulations{kAllModulations.begin(), kAllModulations.end()};
  std::uint64_t seed = 0;

  void validate() const;
  const std::vector<double>& grid() const;
};

std::vector<double> default_aoa_grid();
// `count` evenly spaced azimuths over [lo, hi] degrees.
std::vector<double> aoa_grid(std::size_t count, double lo = -70.0, double hi = 70.0);

/// M x 2 x T real array: values[(m * 2 + c) * T + t], c = 0 for I, 1 for Q.
struct IQTensor {
  std::size_t antennas = 0;
  std::size_t time = 0;
  std::vector<double> values;

  IQTensor() = default;
  IQTensor(std::size_t m, std::size_t t) : antennas(m), time(t), values(m * 2 * t, 0.0) {}

  double& at(std::size_t m, std::size_t c, std::size_t t) { return values[(m * 2 + c) * time + t]; }
  double at(std::size_t m, std::size_t c, std::size_t t) const {
    return values[(m * 2 + c) * time + t];
  }
  std::complex<double> iq(std::size_t m, std::size_t t) const { return {at(m, 0, t), at(m, 1, t)}; }
  double max_abs() const;
};

struct SampleLabel {
  Modulation modulation = Modulation::kBpsk;
  int aoa_bin = 0;
  double snr_db = 0.0;
};

// Unit-average-power constellation points (empty for the analog tones).
std::vector<std::complex<double>> constellation(Modulation m);

// Digital schemes draw uniformly from their constellation. SINE yields
// exp(j 2 pi f k) and CW yields 1 for every index k.
std::vector<std::complex<double>> synthesize_symbols(Modulation m, std::size_t n_symbols, Rng& rng,
                                                     double sine_cycles_per_sample = 0.05);

// Baseband waveform s(t) of length config.time with rectangular pulses.
std::vector<std::complex<double>> synthesize_waveform(const SynthesisConfig& config, Modulation m,
                                                      Rng& rng);

// x_m(t) = alpha s(t) exp(j steering_phase(m, theta)) + n_m(t).
// snr_db = +inf disables noise. theta in radians; the label takes the
// nearest grid bin.
std::pair<IQTensor, SampleLabel> synthesize_sample(const SynthesisConfig& config, Modulation m,
                                                   double theta, double snr_db, Rng& rng);

IQTensor unit_max_normalize(IQTensor x);
void unit_max_normalize_inplace(std::span<double> values);

}  // namespace iqbench
