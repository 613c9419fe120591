#pragma once

#include <charconv>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biostream/gaze/geometry.hpp"

namespace biostream::gaze {

/// Detector output in normalized world-camera coordinates.
struct LabeledBox {
  std::string label;
  double confidence = 0.0;
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double area() const { return (x1 - x0) * (y1 - y0); }
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// Parses a MARKER payload `label,confidence,x0,y0,x1,y1`.
inline LabeledBox parse_box_marker(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const auto comma = text.find(',', pos);
    parts.push_back(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (parts.size() != 6 || parts[0].empty())
    throw invalid_argument("box marker must be 'label,confidence,x0,y0,x1,y1': '" + std::string(text) + "'");
  double v[5];
  for (int i = 0; i < 5; ++i) {
    const auto s = parts[static_cast<std::size_t>(i) + 1];
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v[i]);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
      throw invalid_argument("box marker field is not a number: '" + std::string(s) + "'");
  }
  LabeledBox b{std::string(parts[0]), v[0], v[1], v[2], v[3], v[4]};
  if (b.x1 < b.x0 || b.y1 < b.y0) throw invalid_argument("box marker has inverted corners");
  return b;
}

/// Label of the smallest box containing the point (x, y); ties keep the
/// earlier box.
inline std::optional<std::string> associate_gaze_object(double x, double y, std::span<const LabeledBox> boxes) {
  const LabeledBox* best = nullptr;
  for (const auto& b : boxes)
    if (b.contains(x, y) && (!best || b.area() < best->area())) best = &b;
  if (!best) return std::nullopt;
  return best->label;
}

/// Screen pixels to normalized world-camera coordinates, assuming the world
/// view is filled by the screen.
inline std::pair<double, double> to_world_normalized(ScreenPoint p, const ScreenGeometry& g) {
  return {p.x / g.width_px, p.y / g.height_px};
}

}  // namespace biostream::gaze
