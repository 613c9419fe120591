#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "biostream/gaze/calibration.hpp"
#include "biostream/sim/config.hpp"

namespace biostream::sim {

/// Invertible quadratic pupil -> normalized screen map used as ground truth.
/// Written in the calibration basis so a perfect fit is possible.
inline gaze::CalibrationModel ground_truth_gaze_map(const gaze::ScreenGeometry& g) {
  // s = 0.5 + 1.6 dx + 0.15 dx^2 + 0.10 dx dy  with dx = px - 0.5, dy = py - 0.5
  // t = 0.5 + 1.5 dy - 0.12 dy^2 + 0.08 dx dy
  gaze::CalibrationModel m;
  const double W = g.width_px, H = g.height_px;
  // expand in {1, px, py, px py, px^2, py^2}
  m.coef_x = {W * (0.5 - 0.8 + 0.0375 + 0.025), W * (1.6 - 0.15 - 0.05), W * (-0.05), W * 0.10, W * 0.15, 0.0};
  m.coef_y = {H * (0.5 - 0.75 - 0.03 + 0.02), H * (-0.04), H * (1.5 + 0.12 - 0.04), H * 0.08, 0.0, H * (-0.12)};
  return m;
}

/// Newton inversion of a calibration-basis map.
inline gaze::PupilPoint invert_gaze_map(const gaze::CalibrationModel& m, gaze::ScreenPoint target) {
  gaze::PupilPoint p{0.5, 0.5};
  for (int it = 0; it < 50; ++it) {
    const auto s = m.evaluate(p);
    const double rx = s.x - target.x, ry = s.y - target.y;
    const auto& cx = m.coef_x;
    const auto& cy = m.coef_y;
    const double j11 = cx[1] + cx[3] * p.y + 2 * cx[4] * p.x, j12 = cx[2] + cx[3] * p.x + 2 * cx[5] * p.y;
    const double j21 = cy[1] + cy[3] * p.y + 2 * cy[4] * p.x, j22 = cy[2] + cy[3] * p.x + 2 * cy[5] * p.y;
    const double det = j11 * j22 - j12 * j21;
    if (det == 0.0) throw Error(ErrorCode::numerical, "invert_gaze_map: singular Jacobian");
    const double dx = (j22 * rx - j12 * ry) / det, dy = (-j21 * rx + j11 * ry) / det;
    p.x -= dx;
    p.y -= dy;
    if (std::abs(dx) + std::abs(dy) < 1e-15) break;
  }
  return p;
}

struct GazeScript {
  std::vector<gaze::ScreenPoint> targets;
  double fixation_s = 0.5;
  double start_time_s = 0.0;
  double jitter_deg = 0.0;  // RMS radial angular jitter per sample
  /// Targets from this index on follow the "movement" event.
  std::optional<std::size_t> movement_before;
  double drift_deg = 0.0;
  double drift_direction_rad = 0.0;
  std::optional<double> post_jitter_deg;
};

struct GazeTrace {
  std::vector<gaze::PupilSample> pupil;
  std::vector<gaze::ScreenPoint> gaze;  // noisy on-screen gaze before the eye camera
  std::vector<std::size_t> target_index;
  std::optional<double> movement_time;
  gaze::CalibrationModel truth_map;
};

/// Fixation on each target in turn. Each sample is displaced by 2-D Gaussian
/// angular jitter (per-axis sd = jitter / sqrt 2); targets after the movement
/// event are first shifted by a constant angular drift. Pupil positions come
/// from inverting the ground-truth map.
inline GazeTrace synth_gaze(const SimConfig& config, const GazeScript& script) {
  config.validate();
  const auto& g = config.screen;
  GazeTrace out;
  out.truth_map = ground_truth_gaze_map(g);
  auto rng = make_rng(config.seed, 0x6A2E);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto per_target = static_cast<std::size_t>(std::llround(script.fixation_s * config.gaze_rate_hz));
  std::size_t k = 0;
  for (std::size_t t = 0; t < script.targets.size(); ++t) {
    const bool moved = script.movement_before && t >= *script.movement_before;
    if (moved && !out.movement_time)
      out.movement_time = script.start_time_s + static_cast<double>(k) / config.gaze_rate_hz;
    gaze::ScreenPoint aim = script.targets[t];
    if (moved && script.drift_deg != 0.0) aim = gaze::point_at_angle(aim, script.drift_deg, script.drift_direction_rad, g);
    const double jitter = moved && script.post_jitter_deg ? *script.post_jitter_deg : script.jitter_deg;
    const double sd = jitter / std::sqrt(2.0);
    for (std::size_t i = 0; i < per_target; ++i, ++k) {
      gaze::ScreenPoint p = aim;
      if (sd > 0.0) {
        const double ax = sd * normal(rng), ay = sd * normal(rng);
        const double mag = std::hypot(ax, ay);
        if (mag > 0.0) p = gaze::point_at_angle(aim, mag, std::atan2(ay, ax), g);
      }
      gaze::PupilSample s;
      s.timestamp = script.start_time_s + static_cast<double>(k) / config.gaze_rate_hz;
      s.pupil = invert_gaze_map(out.truth_map, p);
      s.confidence = 1.0;
      out.pupil.push_back(s);
      out.gaze.push_back(p);
      out.target_index.push_back(t);
    }
  }
  return out;
}

/// 3x3 calibration grid at 10/50/90 % of the screen extent.
inline std::vector<gaze::ScreenPoint> calibration_grid(const gaze::ScreenGeometry& g) {
  std::vector<gaze::ScreenPoint> out;
  for (double fy : {0.1, 0.5, 0.9})
    for (double fx : {0.1, 0.5, 0.9}) out.push_back({fx * g.width_px, fy * g.height_px});
  return out;
}

/// Seeded uniform scatter with at least `margin` (fraction) from each edge.
inline std::vector<gaze::ScreenPoint> scatter_targets(const gaze::ScreenGeometry& g, std::size_t count,
                                                      std::uint64_t seed, double margin = 0.05) {
  auto rng = make_rng(seed, 0x7A26);
  std::uniform_real_distribution<double> u(margin, 1.0 - margin);
  std::vector<gaze::ScreenPoint> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double fx = u(rng);
    const double fy = u(rng);
    out.push_back({fx * g.width_px, fy * g.height_px});
  }
  return out;
}

}  // namespace biostream::sim
