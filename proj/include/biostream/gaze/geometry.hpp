#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "biostream/error.hpp"

namespace biostream::gaze {

/// Screen position in pixels, origin at the top-left corner.
struct ScreenPoint {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const ScreenPoint&, const ScreenPoint&) = default;
};

struct ScreenGeometry {
  int width_px = 1920;
  int height_px = 1080;
  double pixel_pitch_mm = 0.2715;
  double viewing_distance_mm = 700.0;

  void validate() const {
    if (width_px <= 0 || height_px <= 0 || !(pixel_pitch_mm > 0.0) || !(viewing_distance_mm > 0.0))
      throw invalid_argument("ScreenGeometry: all dimensions must be positive");
  }
  ScreenPoint center() const { return {width_px / 2.0, height_px / 2.0}; }
  bool on_screen(ScreenPoint p) const { return p.x >= 0 && p.y >= 0 && p.x <= width_px && p.y <= height_px; }
};

inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Eye-to-point ray in mm with the eye on the normal through the screen centre.
inline Eigen::Vector3d eye_ray(ScreenPoint p, const ScreenGeometry& g) {
  return {(p.x - g.width_px / 2.0) * g.pixel_pitch_mm, (p.y - g.height_px / 2.0) * g.pixel_pitch_mm,
          g.viewing_distance_mm};
}

/// Visual angle in degrees between two screen points.
inline double angular_offset(ScreenPoint p, ScreenPoint q, const ScreenGeometry& g) {
  const Eigen::Vector3d a = eye_ray(p, g);
  const Eigen::Vector3d b = eye_ray(q, g);
  // atan2 form of arccos(a.b / |a||b|), stable for tiny angles
  return std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg;
}

/// The screen point seen `angle_deg` away from `p`, rotating toward the
/// screen-plane direction `direction_rad` (0 = +x, pi/2 = +y).
inline ScreenPoint point_at_angle(ScreenPoint p, double angle_deg, double direction_rad, const ScreenGeometry& g) {
  const Eigen::Vector3d v = eye_ray(p, g).normalized();
  Eigen::Vector3d u(std::cos(direction_rad), std::sin(direction_rad), 0.0);
  u = (u - u.dot(v) * v).normalized();
  const double th = angle_deg * kDegToRad;
  const Eigen::Vector3d r = std::cos(th) * v + std::sin(th) * u;
  if (r.z() <= 0.0) throw invalid_argument("point_at_angle: ray does not reach the screen");
  const Eigen::Vector3d hit = r * (g.viewing_distance_mm / r.z());
  return {hit.x() / g.pixel_pitch_mm + g.width_px / 2.0, hit.y() / g.pixel_pitch_mm + g.height_px / 2.0};
}

}  // namespace biostream::gaze
