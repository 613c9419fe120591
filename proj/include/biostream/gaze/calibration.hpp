#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>

#include <Eigen/Dense>
#include <json.hpp>

#include "biostream/gaze/geometry.hpp"

namespace biostream::gaze {

/// Normalized pupil position in [0,1]^2 as reported by the eye camera.
struct PupilPoint {
  double x = 0.0;
  double y = 0.0;
};

struct PupilSample {
  double timestamp = 0.0;
  PupilPoint pupil;
  double confidence = 1.0;
};

inline void validate(const PupilSample& s) {
  if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) throw invalid_argument("PupilSample: confidence outside [0,1]");
}

inline constexpr std::size_t kBasisSize = 6;

/// {1, px, py, px*py, px^2, py^2}
inline std::array<double, kBasisSize> calibration_basis(PupilPoint p) {
  return {1.0, p.x, p.y, p.x * p.y, p.x * p.x, p.y * p.y};
}

struct CalibrationModel {
  std::array<double, kBasisSize> coef_x{};
  std::array<double, kBasisSize> coef_y{};
  double residual_rms_px = 0.0;

  ScreenPoint evaluate(PupilPoint p) const {
    const auto b = calibration_basis(p);
    ScreenPoint s;
    for (std::size_t i = 0; i < kBasisSize; ++i) {
      s.x += coef_x[i] * b[i];
      s.y += coef_y[i] * b[i];
    }
    return s;
  }
};

inline void to_json(nlohmann::json& j, const CalibrationModel& m) {
  j = {{"coef_x", m.coef_x}, {"coef_y", m.coef_y}, {"residual_rms_px", m.residual_rms_px}};
}
inline void from_json(const nlohmann::json& j, CalibrationModel& m) {
  m.coef_x = j.at("coef_x").get<std::array<double, kBasisSize>>();
  m.coef_y = j.at("coef_y").get<std::array<double, kBasisSize>>();
  m.residual_rms_px = j.value("residual_rms_px", 0.0);
  for (std::size_t i = 0; i < kBasisSize; ++i)
    if (!std::isfinite(m.coef_x[i]) || !std::isfinite(m.coef_y[i]))
      throw invalid_argument("CalibrationModel: non-finite coefficient");
}

inline constexpr double kMaxCalibrationCondition = 1e8;

/// Per-coordinate least squares of target pixels on the quadratic pupil basis.
inline CalibrationModel fit_calibration(std::span<const PupilPoint> pupil, std::span<const ScreenPoint> targets) {
  if (pupil.size() != targets.size()) throw invalid_argument("fit_calibration: pupil/target count mismatch");
  if (pupil.size() < kBasisSize) throw invalid_argument("fit_calibration: need at least 6 point pairs");
  const auto n = static_cast<Eigen::Index>(pupil.size());
  Eigen::MatrixXd a(n, static_cast<Eigen::Index>(kBasisSize));
  Eigen::MatrixXd rhs(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto b = calibration_basis(pupil[static_cast<std::size_t>(i)]);
    for (std::size_t k = 0; k < kBasisSize; ++k) a(i, static_cast<Eigen::Index>(k)) = b[k];
    rhs(i, 0) = targets[static_cast<std::size_t>(i)].x;
    rhs(i, 1) = targets[static_cast<std::size_t>(i)].y;
  }
  if (!a.allFinite() || !rhs.allFinite()) throw invalid_argument("fit_calibration: non-finite input");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > kMaxCalibrationCondition)
    throw Error(ErrorCode::numerical, "fit_calibration: design matrix is ill-conditioned (degenerate target layout)");
  const Eigen::MatrixXd coef = svd.solve(rhs);

  CalibrationModel m;
  for (std::size_t k = 0; k < kBasisSize; ++k) {
    m.coef_x[k] = coef(static_cast<Eigen::Index>(k), 0);
    m.coef_y[k] = coef(static_cast<Eigen::Index>(k), 1);
  }
  const Eigen::MatrixXd resid = a * coef - rhs;
  m.residual_rms_px = std::sqrt(resid.rowwise().squaredNorm().mean());
  return m;
}

inline constexpr double kDefaultMinConfidence = 0.6;

struct GazeSample {
  double timestamp = 0.0;
  ScreenPoint point;
  bool off_screen = false;
};

/// Maps one pupil sample to the screen. Samples under the confidence gate are
/// skipped; off-screen results are returned unclamped and flagged.
inline std::optional<GazeSample> map_gaze(const CalibrationModel& model, const PupilSample& sample,
                                          const ScreenGeometry& geometry,
                                          double min_confidence = kDefaultMinConfidence) {
  validate(sample);
  if (sample.confidence < min_confidence) return std::nullopt;
  GazeSample g;
  g.timestamp = sample.timestamp;
  g.point = model.evaluate(sample.pupil);
  g.off_screen = !geometry.on_screen(g.point);
  return g;
}

}  // namespace biostream::gaze
