#pragma once

// The cardiac chains used by scenarios and the `process` command:
// PPG: band-pass (primary and accelerometer) -> optional ANC -> peaks -> HR.
// ECG: peaks -> HR.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "biostream/dsp/anc.hpp"
#include "biostream/dsp/biquad.hpp"
#include "biostream/dsp/peaks.hpp"

namespace biostream::dsp {

struct BandpassConfig {
  double low_hz = 0.8;
  double high_hz = 4.0;
  int order = 3;
};

struct PpgChainConfig {
  BandpassConfig band;
  bool anc_enabled = true;
  AncConfig anc;
  double min_distance_s = 0.3;
  double prominence_std_factor = 0.75; // min prominence = factor * std(signal)
  double window_s = 15.0;
};

struct EcgChainConfig {
  double min_distance_s = 0.3;
  double prominence_range_factor = 0.4;  // of (99.9th percentile - median)
  double window_s = 15.0;
};

struct ChainResult {
  std::vector<double> filtered;
  std::vector<double> cleaned;  // equals filtered when ANC is off
  std::vector<std::size_t> peaks;
  std::vector<std::optional<double>> hr_bpm;
};

inline double stddev(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(x.size() - 1));
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k), x.end());
  return x[k];
}

/// `accel` is row-major [n x n_axes]; it is band-passed with the same design
/// before serving as the ANC reference.
inline ChainResult run_ppg_chain(std::span<const double> ppg, std::span<const double> accel, std::size_t n_axes,
                                 double sample_rate_hz, const PpgChainConfig& config) {
  const std::size_t n = ppg.size();
  if (config.anc_enabled && (n_axes == 0 || accel.size() != n * n_axes))
    throw invalid_argument("run_ppg_chain: accelerometer matrix does not match the PPG length");
  const auto design = design_bandpass(config.band.low_hz, config.band.high_hz, config.band.order, sample_rate_hz);
  ChainResult r;
  auto primary = design;
  r.filtered = filter_apply(primary, ppg);
  if (config.anc_enabled) {
    std::vector<double> refs(n * n_axes);
    std::vector<double> axis(n);
    for (std::size_t k = 0; k < n_axes; ++k) {
      for (std::size_t i = 0; i < n; ++i) axis[i] = accel[i * n_axes + k];
      auto f = design;
      const auto y = filter_apply(f, axis);
      for (std::size_t i = 0; i < n; ++i) refs[i * n_axes + k] = y[i];
    }
    AncState state(n_axes, config.anc);
    r.cleaned = anc_cancel(r.filtered, refs, state);
  } else {
    r.cleaned = r.filtered;
  }
  const PeakConfig pc{config.min_distance_s, config.prominence_std_factor * stddev(r.cleaned)};
  r.peaks = detect_peaks(r.cleaned, sample_rate_hz, pc);
  r.hr_bpm = heart_rate(r.peaks, sample_rate_hz, config.window_s, static_cast<double>(n) / sample_rate_hz);
  return r;
}

inline ChainResult run_ecg_chain(std::span<const double> ecg, double sample_rate_hz, const EcgChainConfig& config) {
  ChainResult r;
  r.filtered.assign(ecg.begin(), ecg.end());
  r.cleaned = r.filtered;
  std::vector<double> tmp(ecg.begin(), ecg.end());
  const double med = quantile(tmp, 0.5);
  const double top = quantile(std::move(tmp), 0.999);
  const PeakConfig pc{config.min_distance_s, config.prominence_range_factor * (top - med)};
  r.peaks = detect_peaks(ecg, sample_rate_hz, pc);
  r.hr_bpm = heart_rate(r.peaks, sample_rate_hz, config.window_s, static_cast<double>(ecg.size()) / sample_rate_hz);
  return r;
}

}  // namespace biostream::dsp
