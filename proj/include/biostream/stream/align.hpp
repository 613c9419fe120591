#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "biostream/stream/types.hpp"

namespace biostream::stream {

/// A stream's descriptor together with the chunks received for it, with
/// clock offsets already applied to the timestamps.
struct StreamData {
  StreamInfo info;
  std::vector<Chunk> chunks;

  std::vector<double> timestamps() const {
    std::vector<double> out;
    for (const auto& c : chunks) out.insert(out.end(), c.timestamps.begin(), c.timestamps.end());
    return out;
  }
  /// Row-major [n x channel_count].
  std::vector<float> samples() const {
    std::vector<float> out;
    for (const auto& c : chunks) out.insert(out.end(), c.samples.begin(), c.samples.end());
    return out;
  }
  std::vector<Marker> markers() const {
    std::vector<Marker> out;
    for (const auto& c : chunks) out.insert(out.end(), c.markers.begin(), c.markers.end());
    return out;
  }
  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& c : chunks) n += c.size();
    return n;
  }
};

struct TimeSpan {
  double start = 0.0;
  double end = 0.0;
};

struct SnappedMarker {
  std::size_t grid_index = 0;
  Marker marker;
};

struct AlignedStream {
  std::string source_id;
  std::size_t channel_count = 0;
  std::vector<double> values;  // row-major [grid x channel_count], NaN where invalid
  std::vector<bool> valid;     // per grid point
  std::vector<SnappedMarker> markers;

  double value(std::size_t k, std::size_t ch) const { return values[k * channel_count + ch]; }
};

struct AlignedFrame {
  double rate_hz = 0.0;
  std::vector<double> grid_timestamps;
  std::vector<AlignedStream> streams;
};

/// Resamples regular streams onto the grid start + k/rate by linear
/// interpolation; grid points outside a stream's observed span are masked.
/// Markers are snapped to the nearest grid point, ties toward the earlier one.
inline AlignedFrame align_streams(const std::vector<StreamData>& streams, double output_rate_hz, TimeSpan span) {
  if (!(output_rate_hz > 0.0)) throw invalid_argument("align_streams: output rate must be positive");
  AlignedFrame frame;
  frame.rate_hz = output_rate_hz;
  if (!(span.end >= span.start)) return frame;

  const double dt = 1.0 / output_rate_hz;
  const auto n_grid = static_cast<std::size_t>(std::floor((span.end - span.start) * output_rate_hz + 1e-9)) + 1;
  frame.grid_timestamps.resize(n_grid);
  for (std::size_t k = 0; k < n_grid; ++k) frame.grid_timestamps[k] = span.start + static_cast<double>(k) * dt;

  for (const auto& s : streams) {
    AlignedStream out;
    out.source_id = s.info.source_id;
    out.channel_count = s.info.channel_count;
    out.values.assign(n_grid * out.channel_count, std::numeric_limits<double>::quiet_NaN());
    out.valid.assign(n_grid, false);

    if (s.info.kind == StreamKind::MARKER) {
      for (const auto& m : s.markers()) {
        const double pos = (m.timestamp - span.start) * output_rate_hz;
        if (pos < -0.5 || pos > static_cast<double>(n_grid - 1) + 0.5) continue;
        // ceil(pos - 0.5) rounds exact halves down
        auto k = static_cast<long long>(std::ceil(pos - 0.5));
        k = std::clamp<long long>(k, 0, static_cast<long long>(n_grid - 1));
        out.markers.push_back({static_cast<std::size_t>(k), m});
      }
      frame.streams.push_back(std::move(out));
      continue;
    }

    const auto ts = s.timestamps();
    const auto xs = s.samples();
    const std::size_t ch = out.channel_count;
    if (ts.empty()) {
      frame.streams.push_back(std::move(out));
      continue;
    }
    std::size_t i = 0;
    for (std::size_t k = 0; k < n_grid; ++k) {
      const double t = frame.grid_timestamps[k];
      if (t < ts.front() || t > ts.back()) continue;
      while (i + 1 < ts.size() && ts[i + 1] <= t) ++i;
      out.valid[k] = true;
      if (i + 1 >= ts.size() || ts[i] == t) {
        for (std::size_t c = 0; c < ch; ++c) out.values[k * ch + c] = xs[i * ch + c];
        continue;
      }
      const double w = (t - ts[i]) / (ts[i + 1] - ts[i]);
      for (std::size_t c = 0; c < ch; ++c) {
        const double a = xs[i * ch + c];
        const double b = xs[(i + 1) * ch + c];
        out.values[k * ch + c] = a + w * (b - a);
      }
    }
    frame.streams.push_back(std::move(out));
  }
  return frame;
}

}  // namespace biostream::stream
