#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <json.hpp>

#include "biostream/error.hpp"

namespace biostream::ica {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Interpolated scalp topography on an R x R grid spanning [-1, 1]^2.
/// Row r sits at y = -1 + 2r/(R-1), column c at x = -1 + 2c/(R-1); nodes
/// outside the unit disc are NaN.
struct ScalpMap {
  std::vector<Point2> channel_positions;
  std::vector<double> values;
  std::size_t resolution = 0;
  std::vector<double> grid;  // row-major

  double at(std::size_t row, std::size_t col) const { return grid[row * resolution + col]; }
};

inline double grid_coordinate(std::size_t i, std::size_t resolution) {
  if (resolution == 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(resolution - 1);
}

/// Inverse-distance weighting with weight 1/(d^2 + 1e-6); a node that falls
/// exactly on an electrode takes that electrode's value.
inline ScalpMap scalp_grid(std::span<const Point2> positions, std::span<const double> values, std::size_t resolution) {
  if (positions.size() != values.size() || positions.empty())
    throw invalid_argument("scalp_grid: need one value per channel position");
  if (resolution == 0) throw invalid_argument("scalp_grid: resolution must be positive");
  ScalpMap map;
  map.channel_positions.assign(positions.begin(), positions.end());
  map.values.assign(values.begin(), values.end());
  map.resolution = resolution;
  map.grid.assign(resolution * resolution, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < resolution; ++r) {
    const double y = grid_coordinate(r, resolution);
    for (std::size_t c = 0; c < resolution; ++c) {
      const double x = grid_coordinate(c, resolution);
      if (x * x + y * y > 1.0 + 1e-12) continue;
      double num = 0.0, den = 0.0;
      bool hit = false;
      for (std::size_t k = 0; k < positions.size(); ++k) {
        const double dx = x - positions[k].x, dy = y - positions[k].y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < 1e-18) {
          map.grid[r * resolution + c] = values[k];
          hit = true;
          break;
        }
        const double w = 1.0 / (d2 + 1e-6);
        num += w * values[k];
        den += w;
      }
      if (!hit) map.grid[r * resolution + c] = num / den;
    }
  }
  return map;
}

/// Dashboard "scalp" payload; NaN nodes are sent as null.
inline nlohmann::json to_json(const ScalpMap& map, std::size_t component) {
  nlohmann::json grid = nlohmann::json::array();
  for (std::size_t r = 0; r < map.resolution; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < map.resolution; ++c) {
      const double v = map.at(r, c);
      row.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    }
    grid.push_back(std::move(row));
  }
  nlohmann::json pos = nlohmann::json::array();
  for (const auto& p : map.channel_positions) pos.push_back({p.x, p.y});
  return {{"component", component}, {"resolution", map.resolution}, {"grid", std::move(grid)}, {"positions", std::move(pos)}};
}

}  // namespace biostream::ica
