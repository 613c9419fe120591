#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "biostream/error.hpp"

namespace biostream::dsp {

struct PeakConfig {
  double min_distance_s = 0.3;
  double min_prominence = 0.0;
};

/// Topographic prominence of the local maximum at `i`: height above the
/// higher of the two minima reached before the signal climbs above x[i]
/// (or runs out) on either side.
inline double peak_prominence(std::span<const double> x, std::size_t i) {
  double left_min = x[i];
  for (std::size_t j = i; j-- > 0;) {
    if (x[j] > x[i]) break;
    left_min = std::min(left_min, x[j]);
  }
  double right_min = x[i];
  for (std::size_t j = i + 1; j < x.size(); ++j) {
    if (x[j] > x[i]) break;
    right_min = std::min(right_min, x[j]);
  }
  return x[i] - std::max(left_min, right_min);
}

/// Strict local maxima with enough prominence, kept tallest-first while
/// suppressing anything closer than min_distance to a kept peak. Ascending.
inline std::vector<std::size_t> detect_peaks(std::span<const double> x, double sample_rate_hz,
                                             const PeakConfig& config) {
  if (!(config.min_distance_s * sample_rate_hz >= 1.0))
    throw invalid_argument("detect_peaks: min_distance must span at least one sample");
  if (x.size() < 3) return {};

  std::vector<std::size_t> cand;
  for (std::size_t i = 1; i + 1 < x.size(); ++i)
    if (x[i - 1] < x[i] && x[i] > x[i + 1] && peak_prominence(x, i) >= config.min_prominence) cand.push_back(i);

  std::vector<std::size_t> order(cand.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[cand[a]] > x[cand[b]]; });

  const double min_gap = config.min_distance_s * sample_rate_hz;
  std::vector<bool> removed(cand.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t o : order) {
    if (removed[o]) continue;
    kept.push_back(cand[o]);
    // candidates are sorted by index, so neighbours are contiguous
    for (std::size_t j = o; j-- > 0 && static_cast<double>(cand[o] - cand[j]) < min_gap;) removed[j] = true;
    for (std::size_t j = o + 1; j < cand.size() && static_cast<double>(cand[j] - cand[o]) < min_gap; ++j)
      removed[j] = true;
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Per-window heart rate 60 / mean(RR) over non-overlapping windows
/// [k*W, (k+1)*W). Windows with fewer than two peaks yield nullopt.
/// `duration_s` fixes the window count to floor(duration / W); without it the
/// windows run up to the window holding the last peak.
inline std::vector<std::optional<double>> heart_rate(std::span<const std::size_t> peaks, double sample_rate_hz,
                                                     double window_s = 15.0,
                                                     std::optional<double> duration_s = std::nullopt) {
  if (!(sample_rate_hz > 0.0) || !(window_s > 0.0)) throw invalid_argument("heart_rate: rate and window must be positive");
  std::size_t n_windows = 0;
  if (duration_s) {
    n_windows = static_cast<std::size_t>(std::floor(*duration_s / window_s + 1e-9));
  } else if (!peaks.empty()) {
    n_windows = static_cast<std::size_t>(std::floor(static_cast<double>(peaks.back()) / sample_rate_hz / window_s)) + 1;
  }
  std::vector<std::optional<double>> out(n_windows);
  std::vector<double> times;
  for (std::size_t w = 0; w < n_windows; ++w) {
    times.clear();
    const double lo = static_cast<double>(w) * window_s;
    const double hi = lo + window_s;
    for (auto p : peaks) {
      const double t = static_cast<double>(p) / sample_rate_hz;
      if (t >= lo && t < hi) times.push_back(t);
    }
    if (times.size() < 2) continue;
    double sum = 0.0;
    for (std::size_t i = 1; i < times.size(); ++i) sum += times[i] - times[i - 1];
    out[w] = 60.0 / (sum / static_cast<double>(times.size() - 1));
  }
  return out;
}

struct HrvReport {
  double mean_hr_bpm = 0.0;
  double sdnn_ms = 0.0;
  double rmssd_ms = 0.0;
  std::size_t n_intervals = 0;
};

inline HrvReport hrv_metrics(std::span<const std::size_t> peaks, double sample_rate_hz) {
  if (peaks.size() < 3) throw invalid_argument("hrv_metrics: need at least three peaks");
  if (!std::is_sorted(peaks.begin(), peaks.end())) throw invalid_argument("hrv_metrics: peaks must be ascending");
  std::vector<double> rr(peaks.size() - 1);
  for (std::size_t i = 1; i < peaks.size(); ++i)
    rr[i - 1] = 1000.0 * static_cast<double>(peaks[i] - peaks[i - 1]) / sample_rate_hz;
  const double n = static_cast<double>(rr.size());
  const double mean = std::accumulate(rr.begin(), rr.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rr) ss += (r - mean) * (r - mean);
  double sd2 = 0.0;
  for (std::size_t i = 1; i < rr.size(); ++i) sd2 += (rr[i] - rr[i - 1]) * (rr[i] - rr[i - 1]);
  HrvReport rep;
  rep.n_intervals = rr.size();
  rep.mean_hr_bpm = 60000.0 / mean;
  rep.sdnn_ms = std::sqrt(ss / n);
  rep.rmssd_ms = std::sqrt(sd2 / static_cast<double>(rr.size() - 1));
  return rep;
}

}  // namespace biostream::dsp
