#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "biostream/gaze/calibration.hpp"

namespace biostream::gaze {

inline constexpr double kSpreadTieDeg = 1e-9;

struct Fixation {
  double start = 0.0;
  double end = 0.0;
  ScreenPoint centroid;
  std::vector<std::size_t> members;  // indices into the segmented sample sequence

  double duration() const { return end - start; }
};

struct FixationConfig {
  double dispersion_deg = 1.0;
  double min_duration_s = 0.1;
};

/// Dispersion-threshold (I-DT) segmentation: a window grows while the largest
/// pairwise visual angle among its samples stays within the threshold, and is
/// emitted when it spans at least min_duration_s (first to last timestamp).
/// A spread landing on the threshold to within 1e-9 deg counts as exceeding
/// it, so uniform motion at exactly threshold/min_duration is never a fixation.
inline std::vector<Fixation> segment_fixations(std::span<const GazeSample> samples, const ScreenGeometry& geometry,
                                               const FixationConfig& config = {}) {
  std::vector<Fixation> out;
  const std::size_t n = samples.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n) {
      bool fits = true;
      for (std::size_t k = i; k < j && fits; ++k)
        fits = angular_offset(samples[k].point, samples[j].point, geometry) < config.dispersion_deg - kSpreadTieDeg;
      if (!fits) break;
      ++j;
    }
    // window is [i, j)
    if (samples[j - 1].timestamp - samples[i].timestamp >= config.min_duration_s) {
      Fixation f;
      f.start = samples[i].timestamp;
      f.end = samples[j - 1].timestamp;
      for (std::size_t k = i; k < j; ++k) {
        f.members.push_back(k);
        f.centroid.x += samples[k].point.x;
        f.centroid.y += samples[k].point.y;
      }
      f.centroid.x /= static_cast<double>(j - i);
      f.centroid.y /= static_cast<double>(j - i);
      out.push_back(std::move(f));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

inline constexpr double kDefaultMatchRadiusDeg = 3.0;

struct FixationMatch {
  std::size_t fixation = 0;
  std::size_t target = 0;
  double offset_deg = 0.0;
};

/// Pairs every fixation with its nearest target when that target lies within
/// `max_deg`; unmatched fixations are dropped.
inline std::vector<FixationMatch> match_fixations(std::span<const Fixation> fixations,
                                                  std::span<const ScreenPoint> targets, const ScreenGeometry& geometry,
                                                  double max_deg = kDefaultMatchRadiusDeg) {
  std::vector<FixationMatch> out;
  for (std::size_t f = 0; f < fixations.size(); ++f) {
    std::optional<FixationMatch> best;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const double d = angular_offset(fixations[f].centroid, targets[t], geometry);
      if (d <= max_deg && (!best || d < best->offset_deg)) best = FixationMatch{f, t, d};
    }
    if (best) out.push_back(*best);
  }
  return out;
}

/// Mean visual angle between paired fixation centroids and targets.
inline double gaze_accuracy(std::span<const ScreenPoint> centroids, std::span<const ScreenPoint> targets,
                            const ScreenGeometry& geometry) {
  if (centroids.size() != targets.size() || centroids.empty())
    throw invalid_argument("gaze_accuracy: need equally many centroids and targets");
  double sum = 0.0;
  for (std::size_t i = 0; i < centroids.size(); ++i) sum += angular_offset(centroids[i], targets[i], geometry);
  return sum / static_cast<double>(centroids.size());
}

inline double gaze_accuracy(std::span<const Fixation> fixations, std::span<const ScreenPoint> targets,
                            const ScreenGeometry& geometry, double max_deg = kDefaultMatchRadiusDeg) {
  const auto matches = match_fixations(fixations, targets, geometry, max_deg);
  if (matches.empty()) throw invalid_argument("gaze_accuracy: no fixation matched a target");
  double sum = 0.0;
  for (const auto& m : matches) sum += m.offset_deg;
  return sum / static_cast<double>(matches.size());
}

/// RMS visual angle between successive samples within each fixation, pooled
/// over all successive pairs.
inline double gaze_precision(const std::vector<std::vector<ScreenPoint>>& fixation_samples,
                             const ScreenGeometry& geometry) {
  double ss = 0.0;
  std::size_t pairs = 0;
  for (const auto& fx : fixation_samples)
    for (std::size_t i = 1; i < fx.size(); ++i) {
      const double th = angular_offset(fx[i - 1], fx[i], geometry);
      ss += th * th;
      ++pairs;
    }
  if (pairs == 0) throw invalid_argument("gaze_precision: no successive sample pairs");
  return std::sqrt(ss / static_cast<double>(pairs));
}

inline double gaze_precision(std::span<const GazeSample> samples, std::span<const Fixation> fixations,
                             const ScreenGeometry& geometry) {
  std::vector<std::vector<ScreenPoint>> groups;
  for (const auto& f : fixations) {
    auto& g = groups.emplace_back();
    for (auto k : f.members) g.push_back(samples[k].point);
  }
  return gaze_precision(groups, geometry);
}

}  // namespace biostream::gaze
