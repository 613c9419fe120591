#pragma once

// Simulated sensors: generator output cut into chunks and framed exactly as a
// networked device would send it.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "biostream/sim/cardiac.hpp"
#include "biostream/sim/eeg.hpp"
#include "biostream/sim/gaze.hpp"
#include "biostream/sim/link.hpp"
#include "biostream/stream/types.hpp"
#include "biostream/stream/wire.hpp"

namespace biostream::sim {

struct SimStreamSpec {
  std::string source_id;
  stream::StreamKind kind = stream::StreamKind::PPG;
  std::string name;
  std::size_t channels = 0;  // EEG only
  std::vector<std::string> channel_labels;
  bool blink = false;          // EEG: last source is a blink train
  bool script_markers = false;  // MARKER: announce each gaze target
};

struct GazeScanpath {
  bool calibration_grid = true;
  std::size_t test_targets = 20;
  double jitter_deg = 0.0;
  double drift_deg = 0.0;
  double drift_direction_rad = 0.0;
  std::optional<std::size_t> movement_before;
};

struct SimSource {
  SimConfig sim;
  Activity activity = Activity::rest;
  double duration_s = 10.0;
  double start_time_s = 0.0;
  double chunk_s = 0.1;
  std::vector<SimStreamSpec> streams;
  GazeScanpath scanpath;
  LinkModel link;
};

inline void from_json(const nlohmann::json& j, SimStreamSpec& s) {
  s.source_id = j.at("source_id").get<std::string>();
  s.kind = stream::kind_from_string(j.at("kind").get<std::string>());
  s.name = j.value("name", s.source_id);
  s.channels = j.value("channels", std::size_t{0});
  s.channel_labels = j.value("channel_labels", std::vector<std::string>{});
  s.blink = j.value("blink", false);
  s.script_markers = j.value("script_markers", false);
}

inline void from_json(const nlohmann::json& j, GazeScanpath& g) {
  g.calibration_grid = j.value("calibration_grid", g.calibration_grid);
  g.test_targets = j.value("test_targets", g.test_targets);
  g.jitter_deg = j.value("jitter_deg", g.jitter_deg);
  g.drift_deg = j.value("drift_deg", g.drift_deg);
  g.drift_direction_rad = j.value("drift_direction_rad", g.drift_direction_rad);
  if (j.contains("movement_before")) g.movement_before = j.at("movement_before").get<std::size_t>();
}

inline void from_json(const nlohmann::json& j, LinkModel& l) {
  l.base_latency_s = j.value("base_latency_s", l.base_latency_s);
  l.jitter_s = j.value("jitter_s", l.jitter_s);
  l.clock_offset_s = j.value("clock_offset_s", l.clock_offset_s);
  l.clock_drift_ppm = j.value("clock_drift_ppm", l.clock_drift_ppm);
  l.exchanges_per_burst = j.value("exchanges_per_burst", l.exchanges_per_burst);
  l.burst_period_s = j.value("burst_period_s", l.burst_period_s);
  l.seed = j.value("seed", l.seed);
  if (l.exchanges_per_burst == 0 || !(l.burst_period_s > 0) || l.base_latency_s < 0 || l.jitter_s < 0)
    throw invalid_argument("link: latency, jitter and burst settings must be non-negative and non-empty");
}

inline std::vector<std::string> default_labels(const SimStreamSpec& s, std::size_t n) {
  using K = stream::StreamKind;
  switch (s.kind) {
    case K::ECG: return {"ECG"};
    case K::PPG: return {"PPG"};
    case K::ACC: return {"ax", "ay", "az"};
    case K::GAZE: return {"pupil_x", "pupil_y", "confidence"};
    case K::MARKER: return {"marker"};
    default: break;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("EEG" + std::to_string(i + 1));
  return out;
}

inline stream::StreamInfo stream_info(const SimSource& src, const SimStreamSpec& s) {
  using K = stream::StreamKind;
  stream::StreamInfo info;
  info.name = s.name.empty() ? s.source_id : s.name;
  info.kind = s.kind;
  info.source_id = s.source_id;
  std::size_t n = 1;
  switch (s.kind) {
    case K::ECG: info.nominal_rate_hz = src.sim.ecg_rate_hz; info.units = {"mV"}; break;
    case K::PPG: info.nominal_rate_hz = src.sim.ppg_rate_hz; info.units = {"a.u."}; break;
    case K::ACC: n = 3; info.nominal_rate_hz = src.sim.ppg_rate_hz; info.units = {"g", "g", "g"}; break;
    case K::GAZE: n = 3; info.nominal_rate_hz = src.sim.gaze_rate_hz; info.units = {"norm", "norm", "1"}; break;
    case K::EEG:
      n = s.channels ? s.channels : (s.channel_labels.empty() ? 14 : s.channel_labels.size());
      info.nominal_rate_hz = src.sim.eeg_rate_hz;
      info.units.assign(n, "uV");
      break;
    case K::MARKER: break;
    default: throw invalid_argument("simulated stream '" + s.source_id + "': kind " + std::string(to_string(s.kind)) +
                                    " has no generator");
  }
  info.channel_count = static_cast<std::uint32_t>(n);
  info.channel_labels = s.channel_labels.empty() ? default_labels(s, n) : s.channel_labels;
  stream::validate(info);
  return info;
}

/// Gaze targets of the scripted scanpath, repeated to fill `duration_s`.
inline std::vector<gaze::ScreenPoint> scanpath_targets(const SimSource& src) {
  std::vector<gaze::ScreenPoint> cycle;
  if (src.scanpath.calibration_grid) cycle = calibration_grid(src.sim.screen);
  const auto extra = scatter_targets(src.sim.screen, src.scanpath.test_targets, src.sim.seed);
  cycle.insert(cycle.end(), extra.begin(), extra.end());
  if (cycle.empty()) cycle.push_back(src.sim.screen.center());
  const auto n = static_cast<std::size_t>(std::ceil(std::max(src.duration_s, 0.0) / src.sim.fixation_s));
  std::vector<gaze::ScreenPoint> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(cycle[i % cycle.size()]);
  return out;
}

struct SimRender {
  std::vector<stream::StreamInfo> streams;  // stream_id = position
  std::vector<TimedMessage> frames;         // HELLOs first, then data by send time
};

namespace detail {

inline void chunk_rows(std::vector<TimedMessage>& out, stream::StreamId id, std::size_t n_ch, double t0, double rate,
                       std::size_t n, double chunk_s, const auto& value) {
  const auto per = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(chunk_s * rate)));
  for (std::size_t start = 0; start < n; start += per) {
    const std::size_t end = std::min(n, start + per);
    stream::wire::ChunkFrame f;
    f.stream_id = id;
    f.n_channels = static_cast<std::uint16_t>(n_ch);
    for (std::size_t i = start; i < end; ++i) {
      f.timestamps.push_back(t0 + static_cast<double>(i) / rate);
      for (std::size_t c = 0; c < n_ch; ++c) f.samples.push_back(static_cast<float>(value(i, c)));
    }
    out.push_back({f.timestamps.back(), std::move(f)});
  }
}

}  // namespace detail

/// Deterministic frame sequence for one simulated device. Timestamps are on
/// the device clock.
inline SimRender render_sim_source(const SimSource& src) {
  using K = stream::StreamKind;
  src.sim.validate();
  if (!(src.chunk_s > 0)) throw invalid_argument("simulated source: chunk_s must be positive");
  SimRender r;
  std::vector<TimedMessage> data;
  const double t0 = src.start_time_s;
  const double dur = src.duration_s;

  std::optional<PpgSignal> ppg;
  const auto need_ppg = [&] {
    if (!ppg) ppg = synth_ppg_with_motion(src.sim, dur, src.activity);
    return &*ppg;
  };
  std::optional<GazeTrace> gaze_trace;
  std::vector<gaze::ScreenPoint> targets;
  const auto need_gaze = [&] {
    if (!gaze_trace) {
      targets = scanpath_targets(src);
      GazeScript script;
      script.targets = targets;
      script.fixation_s = src.sim.fixation_s;
      script.start_time_s = t0;
      script.jitter_deg = src.scanpath.jitter_deg;
      script.movement_before = src.scanpath.movement_before;
      script.drift_deg = src.scanpath.drift_deg;
      script.drift_direction_rad = src.scanpath.drift_direction_rad;
      auto cfg = src.sim;
      gaze_trace = synth_gaze(cfg, script);
    }
    return &*gaze_trace;
  };

  for (const auto& spec : src.streams) {
    auto info = stream_info(src, spec);
    const auto id = static_cast<stream::StreamId>(r.streams.size());
    info.stream_id = id;
    r.streams.push_back(info);
    r.frames.push_back({t0, stream::wire::Hello::from(info)});
    const double rate = info.nominal_rate_hz;
    switch (spec.kind) {
      case K::ECG: {
        const auto e = synth_ecg(src.sim, dur);
        detail::chunk_rows(data, id, 1, t0, rate, e.samples.size(), src.chunk_s,
                           [&](std::size_t i, std::size_t) { return e.samples[i]; });
        break;
      }
      case K::PPG: {
        const auto* p = need_ppg();
        detail::chunk_rows(data, id, 1, t0, rate, p->ppg.size(), src.chunk_s,
                           [&](std::size_t i, std::size_t) { return p->ppg[i]; });
        break;
      }
      case K::ACC: {
        const auto* p = need_ppg();
        detail::chunk_rows(data, id, 3, t0, rate, p->ppg.size(), src.chunk_s,
                           [&](std::size_t i, std::size_t c) { return p->accel[i * 3 + c]; });
        break;
      }
      case K::EEG: {
        const auto m = synth_eeg_mixture(src.sim, dur, info.channel_count, {.with_blink = spec.blink});
        detail::chunk_rows(data, id, info.channel_count, t0, rate, static_cast<std::size_t>(m.channels.rows()),
                           src.chunk_s, [&](std::size_t i, std::size_t c) {
                             return m.channels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
                           });
        break;
      }
      case K::GAZE: {
        const auto* g = need_gaze();
        std::size_t n = g->pupil.size();
        while (n > 0 && g->pupil[n - 1].timestamp >= t0 + dur) --n;
        detail::chunk_rows(data, id, 3, t0, rate, n, src.chunk_s, [&](std::size_t i, std::size_t c) {
          const auto& s = g->pupil[i];
          return c == 0 ? s.pupil.x : c == 1 ? s.pupil.y : s.confidence;
        });
        break;
      }
      case K::MARKER: {
        if (!spec.script_markers) break;
        need_gaze();
        for (std::size_t k = 0; k < targets.size(); ++k) {
          const double t = t0 + static_cast<double>(k) * src.sim.fixation_s;
          if (t >= t0 + dur) break;
          char buf[96];
          std::snprintf(buf, sizeof buf, "calib_point,%zu,%.3f,%.3f", k, targets[k].x, targets[k].y);
          data.push_back({t, stream::wire::MarkerFrame{id, t, buf}});
        }
        break;
      }
      default: break;
    }
  }
  std::stable_sort(data.begin(), data.end(), [](const auto& a, const auto& b) { return a.time_s < b.time_s; });
  r.frames.insert(r.frames.end(), std::make_move_iterator(data.begin()), std::make_move_iterator(data.end()));
  return r;
}

}  // namespace biostream::sim
