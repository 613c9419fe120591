#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "biostream/sim/config.hpp"

namespace biostream::sim {

/// Beat times in seconds. The first beat falls half an interval after t=0;
/// each RR is 60/HR(t) plus N(0, rr_jitter), floored at 0.25 s.
inline std::vector<double> beat_times(const SimConfig& config, double duration_s) {
  auto rng = make_rng(config.seed, 0xBEA7);
  std::normal_distribution<double> jitter(0.0, config.rr_jitter_ms / 1000.0);
  const auto hr_at = [&](double t) {
    const double f = duration_s > 0 ? std::clamp(t / duration_s, 0.0, 1.0) : 0.0;
    return config.hr_start_bpm + f * (config.hr_end_bpm - config.hr_start_bpm);
  };
  std::vector<double> beats;
  double t = 0.5 * 60.0 / hr_at(0.0);
  while (t < duration_s) {
    beats.push_back(t);
    double rr = 60.0 / hr_at(t);
    if (config.rr_jitter_ms > 0.0) rr += jitter(rng);
    t += std::max(rr, 0.25);
  }
  return beats;
}

struct EcgSignal {
  double rate_hz = 0.0;
  std::vector<double> samples;
  std::vector<double> beat_times;
};

/// Gaussian QRS complexes at the beat times plus white noise.
inline EcgSignal synth_ecg(const SimConfig& config, double duration_s) {
  config.validate();
  EcgSignal out;
  out.rate_hz = config.ecg_rate_hz;
  out.beat_times = beat_times(config, duration_s);
  const auto n = static_cast<std::size_t>(std::floor(std::max(duration_s, 0.0) * config.ecg_rate_hz));
  out.samples.assign(n, 0.0);
  const double sigma = config.qrs_width_s / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  const double reach = 6.0 * sigma;
  for (double b : out.beat_times) {
    const auto lo = static_cast<long long>(std::ceil((b - reach) * config.ecg_rate_hz));
    const auto hi = static_cast<long long>(std::floor((b + reach) * config.ecg_rate_hz));
    for (long long i = std::max(lo, 0LL); i <= hi && i < static_cast<long long>(n); ++i) {
      const double d = static_cast<double>(i) / config.ecg_rate_hz - b;
      out.samples[static_cast<std::size_t>(i)] += std::exp(-0.5 * d * d / (sigma * sigma));
    }
  }
  auto rng = make_rng(config.seed, 0xEC6);
  std::normal_distribution<double> noise(0.0, config.ecg_noise);
  if (config.ecg_noise > 0.0)
    for (auto& x : out.samples) x += noise(rng);
  return out;
}

struct PpgSignal {
  double rate_hz = 0.0;
  std::vector<double> ppg;    // what the sensor reports
  std::vector<double> accel;  // row-major [n x 3]
  std::vector<double> clean;  // pulse train only
  std::vector<double> artifact;
  std::vector<double> beat_times;
  std::vector<double> peak_times;  // pulse maxima of the clean signal
  double artifact_snr_db = 0.0;    // measured var(clean) / mean-square(artifact)

  std::size_t size() const { return ppg.size(); }
};

inline double quantize_12bit(double x, double lo = -4.0, double hi = 4.0) {
  const double code = std::clamp(std::round((x - lo) / (hi - lo) * 4095.0), 0.0, 4095.0);
  return lo + code / 4095.0 * (hi - lo);
}

/// Raised-cosine pulses one transit delay after each beat. Walking adds three
/// accelerometer sinusoids near the cadence and couples them into the PPG
/// through the configured causal filters, scaled to the artifact SNR.
inline PpgSignal synth_ppg_with_motion(const SimConfig& config, double duration_s, Activity activity) {
  config.validate();
  PpgSignal out;
  out.rate_hz = config.ppg_rate_hz;
  out.beat_times = beat_times(config, duration_s);
  const double fs = config.ppg_rate_hz;
  const auto n = static_cast<std::size_t>(std::floor(std::max(duration_s, 0.0) * fs));
  out.clean.assign(n, 0.0);
  out.artifact.assign(n, 0.0);
  out.accel.assign(n * 3, 0.0);

  for (std::size_t b = 0; b < out.beat_times.size(); ++b) {
    const double centre = out.beat_times[b] + config.pulse_transit_s;
    const double rr = b + 1 < out.beat_times.size() ? out.beat_times[b + 1] - out.beat_times[b]
                      : b > 0                       ? out.beat_times[b] - out.beat_times[b - 1]
                                                    : 60.0 / config.hr_start_bpm;
    const double width = 0.6 * rr;
    if (centre < duration_s) out.peak_times.push_back(centre);
    const auto lo = static_cast<long long>(std::ceil((centre - width / 2) * fs));
    const auto hi = static_cast<long long>(std::floor((centre + width / 2) * fs));
    for (long long i = std::max(lo, 0LL); i <= hi && i < static_cast<long long>(n); ++i) {
      const double d = static_cast<double>(i) / fs - centre;
      if (std::abs(d) < width / 2)
        out.clean[static_cast<std::size_t>(i)] += 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * d / width));
    }
  }

  auto rng = make_rng(config.seed, activity == Activity::walk ? 0xAA1C : 0xAE57);
  std::normal_distribution<double> acc_noise(0.0, config.accel_noise);
  std::normal_distribution<double> ppg_noise(0.0, config.ppg_noise);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  if (activity == Activity::walk) {
    const double offsets[3] = {-0.1, 0.0, 0.1};
    for (int k = 0; k < 3; ++k) {
      const double f = config.walk_cadence_hz + offsets[k];
      const double ph = phase(rng);
      for (std::size_t i = 0; i < n; ++i)
        out.accel[i * 3 + k] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + ph);
    }
  }
  for (auto& a : out.accel) a += acc_noise(rng);

  if (activity == Activity::walk && n > 0) {
    for (int k = 0; k < 3; ++k) {
      const auto& h = config.motion_fir[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < h.size() && j <= i; ++j) out.artifact[i] += h[j] * out.accel[(i - j) * 3 + k];
    }
    double mean = 0.0;
    for (double c : out.clean) mean += c;
    mean /= static_cast<double>(n);
    double p_clean = 0.0, p_art = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p_clean += (out.clean[i] - mean) * (out.clean[i] - mean);
      p_art += out.artifact[i] * out.artifact[i];
    }
    const double scale = p_art > 0.0 ? std::sqrt(p_clean / p_art * std::pow(10.0, -config.artifact_snr_db / 10.0)) : 0.0;
    for (auto& a : out.artifact) a *= scale;
    out.artifact_snr_db = 10.0 * std::log10(p_clean / (p_art * scale * scale));
  } else {
    out.artifact_snr_db = std::numeric_limits<double>::infinity();
  }

  out.ppg.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = out.clean[i] + out.artifact[i] + ppg_noise(rng);
    if (config.quantize_12bit) v = quantize_12bit(v);
    out.ppg[i] = v;
  }
  return out;
}

}  // namespace biostream::sim
