#pragma once

// Batch stage graph over recorded streams. Stages pass double-precision
// signals to each other; only the final streams are narrowed to float.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "biostream/app/config.hpp"
#include "biostream/dsp/pipeline.hpp"
#include "biostream/gaze/calibration.hpp"
#include "biostream/gaze/fixation.hpp"
#include "biostream/ica/ica.hpp"
#include "biostream/ica/scalp.hpp"
#include "biostream/stream/align.hpp"
#include "biostream/stream/clock.hpp"
#include "biostream/stream/recording.hpp"

namespace biostream::app {

/// One stream in double precision. Regular streams keep the row count of each
/// source chunk so the output can be re-chunked the same way.
struct Signal {
  stream::StreamInfo info;
  std::vector<double> t;
  std::vector<double> x;  // row-major [rows x channels]
  std::vector<std::size_t> chunk_rows;
  std::vector<stream::Marker> markers;

  std::size_t rows() const { return t.size(); }
  std::size_t channels() const { return info.channel_count; }
  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) out[i] = x[i * channels() + c];
    return out;
  }
};

inline Signal to_signal(const stream::StreamData& s) {
  Signal sig;
  sig.info = s.info;
  for (const auto& c : s.chunks) {
    if (c.is_marker()) {
      sig.markers.insert(sig.markers.end(), c.markers.begin(), c.markers.end());
      continue;
    }
    if (c.timestamps.empty()) continue;
    sig.t.insert(sig.t.end(), c.timestamps.begin(), c.timestamps.end());
    sig.x.insert(sig.x.end(), c.samples.begin(), c.samples.end());
    sig.chunk_rows.push_back(c.timestamps.size());
  }
  return sig;
}

/// Narrows to float; marker streams get one marker per chunk, as MARKER
/// frames decode.
inline stream::StreamData to_stream_data(const Signal& sig) {
  stream::StreamData out;
  out.info = sig.info;
  if (sig.info.kind == stream::StreamKind::MARKER) {
    for (const auto& m : sig.markers) {
      stream::Chunk c;
      c.stream_id = sig.info.stream_id;
      c.channel_count = sig.info.channel_count;
      c.markers.push_back(m);
      out.chunks.push_back(std::move(c));
    }
    return out;
  }
  std::size_t row = 0;
  const std::size_t ch = sig.channels();
  for (std::size_t n : sig.chunk_rows) {
    if (n == 0) continue;
    stream::Chunk c;
    c.stream_id = sig.info.stream_id;
    c.channel_count = sig.info.channel_count;
    c.timestamps.assign(sig.t.begin() + static_cast<std::ptrdiff_t>(row), sig.t.begin() + static_cast<std::ptrdiff_t>(row + n));
    c.samples.reserve(n * ch);
    for (std::size_t i = row * ch; i < (row + n) * ch; ++i) c.samples.push_back(static_cast<float>(sig.x[i]));
    out.chunks.push_back(std::move(c));
    row += n;
  }
  return out;
}

// ------------------------------------------------------------ gaze flow

struct CalibPoint {
  std::size_t index = 0;
  gaze::ScreenPoint target;
  double t = 0.0;
};

/// "calib_point,<index>,<x_px>,<y_px>"
inline std::optional<CalibPoint> parse_calib_marker(const stream::Marker& m) {
  std::size_t k = 0;
  double x = 0, y = 0;
  int used = 0;
  if (std::sscanf(m.text.c_str(), "calib_point,%zu,%lf,%lf%n", &k, &x, &y, &used) != 3) return std::nullopt;
  if (static_cast<std::size_t>(used) != m.text.size()) return std::nullopt;
  return CalibPoint{k, {x, y}, m.timestamp};
}

inline std::string calib_marker_text(std::size_t index, double x, double y) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "calib_point,%zu,%.3f,%.3f", index, x, y);
  return buf;
}

struct GazeFlowOptions {
  std::size_t n_calibration = 9;
  double min_confidence = gaze::kDefaultMinConfidence;
  /// Leading fraction of each target's display window left out of the pupil
  /// estimate, covering the eye's travel to the new target.
  double settle_fraction = 0.25;
  gaze::ScreenGeometry geometry;
  gaze::FixationConfig fixation;
};

inline void from_json(const nlohmann::json& j, GazeFlowOptions& o) {
  o.n_calibration = j.value("n_calibration", o.n_calibration);
  o.min_confidence = j.value("min_confidence", o.min_confidence);
  o.settle_fraction = j.value("settle_fraction", o.settle_fraction);
  if (j.contains("screen")) {
    const auto& s = j.at("screen");
    o.geometry.width_px = s.value("width_px", o.geometry.width_px);
    o.geometry.height_px = s.value("height_px", o.geometry.height_px);
    o.geometry.pixel_pitch_mm = s.value("pixel_pitch_mm", o.geometry.pixel_pitch_mm);
    o.geometry.viewing_distance_mm = s.value("viewing_distance_mm", o.geometry.viewing_distance_mm);
  }
  o.fixation.dispersion_deg = j.value("dispersion_deg", o.fixation.dispersion_deg);
  o.fixation.min_duration_s = j.value("min_fixation_s", o.fixation.min_duration_s);
  if (!(o.settle_fraction >= 0.0 && o.settle_fraction < 1.0)) throw config_error("settle_fraction must lie in [0, 1)");
  o.geometry.validate();
}

struct GazeFlowResult {
  gaze::CalibrationModel model;
  std::size_t test_targets = 0;
  std::size_t fixations = 0;
  std::optional<double> accuracy_deg;
  std::optional<double> precision_deg;
};

inline nlohmann::json to_json(const GazeFlowResult& r) {
  nlohmann::json j{{"model", r.model}, {"test_targets", r.test_targets}, {"fixations", r.fixations}};
  j["accuracy_deg"] = r.accuracy_deg ? nlohmann::json(*r.accuracy_deg) : nlohmann::json(nullptr);
  j["precision_deg"] = r.precision_deg ? nlohmann::json(*r.precision_deg) : nlohmann::json(nullptr);
  return j;
}

/// Fits the first n_calibration points from the median pupil position of each
/// display window, then scores the remaining points as test targets.
inline GazeFlowResult run_gaze_flow(std::span<const gaze::PupilSample> samples, std::vector<CalibPoint> points,
                                    const GazeFlowOptions& o) {
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  if (points.size() < o.n_calibration) throw invalid_argument("gaze flow: fewer calibration points than required");
  std::vector<double> spans;
  for (std::size_t k = 1; k < points.size(); ++k) spans.push_back(points[k].t - points[k - 1].t);
  const double typical = spans.empty() ? 0.5 : dsp::quantile(spans, 0.5);
  const auto window_end = [&](std::size_t k) { return k + 1 < points.size() ? points[k + 1].t : points[k].t + typical; };

  std::vector<gaze::PupilPoint> centroids;
  std::vector<gaze::ScreenPoint> targets;
  for (std::size_t k = 0; k < o.n_calibration; ++k) {
    const double begin = points[k].t + o.settle_fraction * (window_end(k) - points[k].t);
    const double end = window_end(k);
    std::vector<double> xs, ys;
    for (const auto& s : samples) {
      if (s.timestamp < begin || s.timestamp >= end || s.confidence < o.min_confidence) continue;
      xs.push_back(s.pupil.x);
      ys.push_back(s.pupil.y);
    }
    if (xs.empty()) throw invalid_argument("gaze flow: calibration point " + std::to_string(points[k].index) + " has no confident samples");
    // median: a late stamp on the next point lets a few samples of the next target in
    centroids.push_back({dsp::quantile(xs, 0.5), dsp::quantile(ys, 0.5)});
    targets.push_back(points[k].target);
  }
  GazeFlowResult r;
  r.model = gaze::fit_calibration(centroids, targets);

  if (points.size() == o.n_calibration) return r;
  const double test_begin = points[o.n_calibration].t;
  const double test_end = window_end(points.size() - 1);
  std::vector<gaze::ScreenPoint> test_targets;
  for (std::size_t k = o.n_calibration; k < points.size(); ++k) test_targets.push_back(points[k].target);
  r.test_targets = test_targets.size();
  std::vector<gaze::GazeSample> mapped;
  for (const auto& s : samples) {
    if (s.timestamp < test_begin || s.timestamp >= test_end) continue;
    if (auto g = gaze::map_gaze(r.model, s, o.geometry, o.min_confidence)) mapped.push_back(*g);
  }
  const auto fix = gaze::segment_fixations(mapped, o.geometry, o.fixation);
  const auto matches = gaze::match_fixations(fix, test_targets, o.geometry);
  r.fixations = matches.size();
  if (matches.empty()) return r;
  double acc = 0.0;
  std::vector<gaze::Fixation> matched;
  for (const auto& m : matches) {
    acc += m.offset_deg;
    matched.push_back(fix[m.fixation]);
  }
  r.accuracy_deg = acc / static_cast<double>(matches.size());
  try {
    r.precision_deg = gaze::gaze_precision(mapped, matched, o.geometry);
  } catch (const Error&) {
    // single-sample fixations leave precision undefined
  }
  return r;
}

// ------------------------------------------------------------ ICA helpers

/// Scalp maps of every component: the columns of (W V)^-1 are the
/// per-channel projections.
inline std::vector<ica::ScalpMap> component_scalp_maps(const ica::IcaState& state,
                                                       std::span<const ica::Point2> positions, std::size_t resolution) {
  const ica::Matrix m = state.separating();
  Eigen::FullPivLU<ica::Matrix> lu(m);
  if (!lu.isInvertible()) throw Error(ErrorCode::numerical, "scalp maps: W V is singular");
  const ica::Matrix mixing = lu.inverse();
  std::vector<ica::ScalpMap> out;
  for (Eigen::Index k = 0; k < mixing.cols(); ++k) {
    std::vector<double> v(static_cast<std::size_t>(mixing.rows()));
    for (Eigen::Index r = 0; r < mixing.rows(); ++r) v[static_cast<std::size_t>(r)] = mixing(r, k);
    out.push_back(ica::scalp_grid(positions, v, resolution));
  }
  return out;
}

/// Montage positions in channel order, or nullopt when any label is missing.
inline std::optional<std::vector<ica::Point2>> montage_positions(const std::map<std::string, ica::Point2>& montage,
                                                                 const std::vector<std::string>& labels) {
  std::vector<ica::Point2> out;
  for (const auto& l : labels) {
    auto it = montage.find(l);
    if (it == montage.end()) return std::nullopt;
    out.push_back(it->second);
  }
  return out;
}

inline ica::Matrix rows_matrix(const Signal& s, std::size_t begin, std::size_t n) {
  ica::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(s.channels()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < s.channels(); ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = s.x[(begin + i) * s.channels() + c];
  return m;
}

// ------------------------------------------------------------ stages

struct GraphResult {
  std::vector<Signal> outputs;  // in stage order
  nlohmann::json summary = nlohmann::json::array();
};

namespace stages {

inline Signal derive(const Signal& in, const StageConfig& st) {
  Signal out = in;
  out.info.source_id = st.output;
  out.info.name = st.output;
  return out;
}

inline void require_regular(const Signal& s, const StageConfig& st) {
  if (s.info.kind == stream::StreamKind::MARKER)
    throw invalid_argument("stage '" + st.stage + "' cannot run on marker stream '" + s.info.source_id + "'");
  if (s.rows() == 0) throw invalid_argument("stage '" + st.stage + "': stream '" + s.info.source_id + "' has no samples");
}

inline dsp::BandpassConfig band_params(const nlohmann::json& p) {
  dsp::BandpassConfig b;
  b.low_hz = p.value("low_hz", b.low_hz);
  b.high_hz = p.value("high_hz", b.high_hz);
  b.order = p.value("order", b.order);
  return b;
}

inline dsp::AncConfig anc_params(const nlohmann::json& p) {
  dsp::AncConfig a;
  a.taps = p.value("taps", a.taps);
  a.step = p.value("step", a.step);
  a.initial_step = p.value("initial_step", a.initial_step);
  a.step_decay_samples = p.value("step_decay_samples", a.step_decay_samples);
  a.regularizer = p.value("regularizer", a.regularizer);
  return a;
}

inline Signal bandpass(const Signal& in, const StageConfig& st) {
  require_regular(in, st);
  const auto b = band_params(st.params);
  const auto design = dsp::design_bandpass(b.low_hz, b.high_hz, b.order, in.info.nominal_rate_hz);
  Signal out = derive(in, st);
  for (std::size_t c = 0; c < in.channels(); ++c) {
    auto f = design;
    const auto y = dsp::filter_apply(f, in.column(c));
    for (std::size_t i = 0; i < y.size(); ++i) out.x[i * in.channels() + c] = y[i];
  }
  return out;
}

inline Signal anc(const Signal& in, const Signal& ref, const StageConfig& st) {
  require_regular(in, st);
  require_regular(ref, st);
  if (ref.rows() != in.rows())
    throw invalid_argument("anc stage: reference '" + ref.info.source_id + "' has " + std::to_string(ref.rows()) +
                           " samples, primary has " + std::to_string(in.rows()));
  const auto channel = st.params.value("channel", std::size_t{0});
  if (channel >= in.channels()) throw invalid_argument("anc stage: channel out of range");
  dsp::AncState state(ref.channels(), anc_params(st.params));
  const auto y = dsp::anc_cancel(in.column(channel), ref.x, state);
  Signal out = derive(in, st);
  out.info.channel_count = 1;
  out.info.channel_labels = {in.info.channel_labels[channel]};
  if (!in.info.units.empty()) out.info.units = {in.info.units[channel]};
  out.x = y;
  return out;
}

inline Signal peaks(const Signal& in, const StageConfig& st, nlohmann::json& summary) {
  require_regular(in, st);
  const auto channel = st.params.value("channel", std::size_t{0});
  if (channel >= in.channels()) throw invalid_argument("peaks stage: channel out of range");
  const auto x = in.column(channel);
  const double fs = in.info.nominal_rate_hz;
  const auto method = st.params.value("method", std::string(in.info.kind == stream::StreamKind::ECG ? "ecg" : "ppg"));
  dsp::ChainResult r;
  if (method == "ecg") {
    dsp::EcgChainConfig c;
    c.min_distance_s = st.params.value("min_distance_s", c.min_distance_s);
    c.prominence_range_factor = st.params.value("prominence_range_factor", c.prominence_range_factor);
    c.window_s = st.params.value("window_s", c.window_s);
    r = dsp::run_ecg_chain(x, fs, c);
  } else if (method == "ppg") {
    dsp::PpgChainConfig c;
    c.min_distance_s = st.params.value("min_distance_s", c.min_distance_s);
    c.prominence_std_factor = st.params.value("prominence_std_factor", c.prominence_std_factor);
    c.window_s = st.params.value("window_s", c.window_s);
    const dsp::PeakConfig pc{c.min_distance_s, c.prominence_std_factor * dsp::stddev(x)};
    r.peaks = dsp::detect_peaks(x, fs, pc);
    r.hr_bpm = dsp::heart_rate(r.peaks, fs, c.window_s, static_cast<double>(x.size()) / fs);
  } else {
    throw config_error("peaks stage: unknown method '" + method + "'");
  }
  Signal out;
  out.info.name = st.output;
  out.info.source_id = st.output;
  out.info.kind = stream::StreamKind::MARKER;
  out.info.channel_count = 1;
  out.info.nominal_rate_hz = 0.0;
  out.info.channel_labels = {"marker"};
  for (auto p : r.peaks) out.markers.push_back({in.t[p], "peak"});
  nlohmann::json hr = nlohmann::json::array();
  for (const auto& h : r.hr_bpm) hr.push_back(h ? nlohmann::json(*h) : nlohmann::json(nullptr));
  summary["peak_count"] = r.peaks.size();
  summary["peak_indices"] = r.peaks;
  summary["hr_bpm"] = std::move(hr);
  if (r.peaks.size() >= 3) {
    const auto h = dsp::hrv_metrics(r.peaks, fs);
    summary["hrv"] = {{"mean_hr_bpm", h.mean_hr_bpm}, {"sdnn_ms", h.sdnn_ms}, {"rmssd_ms", h.rmssd_ms},
                      {"n_intervals", h.n_intervals}};
  }
  return out;
}

inline Signal run_ica(const Signal& in, const StageConfig& st, const std::map<std::string, ica::Point2>& montage,
                      nlohmann::json& summary) {
  require_regular(in, st);
  const std::size_t n = in.channels();
  const double init_s = st.params.value("init_s", 10.0);
  const auto init = static_cast<std::size_t>(std::llround(init_s * in.info.nominal_rate_hz));
  if (in.rows() < init)
    throw invalid_argument("ica stage: '" + in.info.source_id + "' is shorter than the " + std::to_string(init_s) +
                           " s initialization window");
  const auto exclude = st.params.value("exclude", std::vector<std::size_t>{});
  const auto mode = st.params.value("mode", std::string(exclude.empty() ? "components" : "clean"));
  if (mode != "components" && mode != "clean") throw config_error("ica stage: mode must be components or clean");
  ica::IcaConfig cfg;
  if (st.params.contains("initial_rate")) cfg.initial_rate = st.params.at("initial_rate").get<double>();
  cfg.rate_decay_samples = st.params.value("rate_decay_samples", cfg.rate_decay_samples);
  ica::OnlineIca online(n, init, cfg);

  Signal out = derive(in, st);
  if (mode == "components") {
    out.info.channel_labels.clear();
    for (std::size_t k = 0; k < n; ++k) out.info.channel_labels.push_back("IC" + std::to_string(k + 1));
    out.info.units.clear();
  }
  std::size_t row = 0, emitted = 0;
  const auto emit_upto = [&](std::size_t end) {
    if (end <= emitted) return;
    const auto chunk = rows_matrix(in, emitted, end - emitted);
    const ica::Matrix y = mode == "components" ? ica::unmix(online.state(), chunk)
                                               : ica::reconstruct_excluding(online.state(), chunk, exclude);
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index c = 0; c < y.cols(); ++c) out.x[(emitted + static_cast<std::size_t>(i)) * n + static_cast<std::size_t>(c)] = y(i, c);
    emitted = end;
  };
  for (std::size_t rows : in.chunk_rows) {
    online.push(rows_matrix(in, row, rows));
    row += rows;
    if (online.ready()) emit_upto(row);
  }
  const auto& state = online.state();
  const ica::Matrix sep = state.separating();
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index r = 0; r < sep.rows(); ++r) {
    nlohmann::json line = nlohmann::json::array();
    for (Eigen::Index c = 0; c < sep.cols(); ++c) line.push_back(sep(r, c));
    w.push_back(std::move(line));
  }
  summary["separating_matrix"] = std::move(w);
  summary["samples_seen"] = state.samples_seen;
  if (auto pos = montage_positions(montage, in.info.channel_labels)) {
    const auto res = st.params.value("scalp_resolution", std::size_t{32});
    nlohmann::json maps = nlohmann::json::array();
    const auto all = component_scalp_maps(state, *pos, res);
    for (std::size_t k = 0; k < all.size(); ++k) maps.push_back(ica::to_json(all[k], k));
    summary["scalp_maps"] = std::move(maps);
  }
  return out;
}

inline std::vector<gaze::PupilSample> pupil_samples(const Signal& in) {
  if (in.info.kind != stream::StreamKind::GAZE || in.channels() < 3)
    throw invalid_argument("gaze stream '" + in.info.source_id + "' must carry pupil_x, pupil_y, confidence");
  std::vector<gaze::PupilSample> out(in.rows());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    const double* r = &in.x[i * in.channels()];
    out[i] = {in.t[i], {r[0], r[1]}, std::clamp(r[2], 0.0, 1.0)};
  }
  return out;
}

inline Signal gaze_map(const Signal& in, const Signal* calib, const StageConfig& st, nlohmann::json& summary) {
  require_regular(in, st);
  const auto opts = st.params.get<GazeFlowOptions>();
  const auto pupil = pupil_samples(in);
  gaze::CalibrationModel model;
  if (st.params.contains("calibration")) {
    model = st.params.at("calibration").get<gaze::CalibrationModel>();
  } else {
    std::vector<CalibPoint> points;
    for (const auto& m : calib->markers)
      if (auto p = parse_calib_marker(m)) points.push_back(*p);
    const auto flow = run_gaze_flow(pupil, points, opts);
    model = flow.model;
    summary["calibration"] = to_json(flow);
  }
  summary["model"] = model;
  Signal out = derive(in, st);
  out.info.channel_labels = {"x_px", "y_px", "on_screen"};
  out.info.units = {"px", "px", "1"};
  out.info.channel_count = 3;
  out.t.clear();
  out.x.clear();
  out.chunk_rows.clear();
  std::size_t row = 0;
  for (std::size_t rows : in.chunk_rows) {
    std::size_t kept = 0;
    for (std::size_t i = row; i < row + rows; ++i) {
      const auto g = gaze::map_gaze(model, pupil[i], opts.geometry, opts.min_confidence);
      if (!g) continue;
      out.t.push_back(g->timestamp);
      out.x.insert(out.x.end(), {g->point.x, g->point.y, g->off_screen ? 0.0 : 1.0});
      ++kept;
    }
    out.chunk_rows.push_back(kept);
    row += rows;
  }
  summary["samples_mapped"] = out.rows();
  return out;
}

}  // namespace stages

/// Runs `stage_list` in order over `input`. Output stream ids continue after
/// the input's.
inline GraphResult run_graph(const stream::RecordedSession& input, const std::vector<StageConfig>& stage_list,
                             const std::map<std::string, ica::Point2>& montage = {}) {
  std::vector<std::string> available;
  for (const auto& s : input.streams) available.push_back(s.info.source_id);
  validate_graph(stage_list, available);

  std::map<std::string, Signal> pool;
  stream::StreamId next_id = 0;
  for (const auto& s : input.streams) {
    pool[s.info.source_id] = to_signal(s);
    next_id = std::max<stream::StreamId>(next_id, static_cast<stream::StreamId>(s.info.stream_id + 1));
  }
  GraphResult result;
  for (const auto& st : stage_list) {
    const Signal& in = pool.at(st.input);
    nlohmann::json summary{{"stage", st.stage}, {"input", st.input}, {"output", st.output}};
    Signal out;
    if (st.stage == "identity") {
      out = stages::derive(in, st);
    } else if (st.stage == "dejitter") {
      out = stages::derive(in, st);
      if (in.info.kind != stream::StreamKind::MARKER && in.rows() >= 2)
        out.t = stream::dejitter_timestamps(in.t, in.info.nominal_rate_hz,
                                            st.params.value("window", stream::kDejitterWindow));
    } else if (st.stage == "bandpass") {
      out = stages::bandpass(in, st);
    } else if (st.stage == "anc") {
      out = stages::anc(in, pool.at(*st.reference), st);
    } else if (st.stage == "peaks") {
      out = stages::peaks(in, st, summary);
    } else if (st.stage == "ica") {
      out = stages::run_ica(in, st, montage, summary);
    } else if (st.stage == "gaze_map") {
      out = stages::gaze_map(in, st.calibration_from ? &pool.at(*st.calibration_from) : nullptr, st, summary);
    } else {
      throw config_error("unknown stage '" + st.stage + "'");
    }
    out.info.stream_id = next_id++;
    stream::validate(out.info);
    result.summary.push_back(std::move(summary));
    pool[st.output] = out;
    result.outputs.push_back(std::move(out));
  }
  return result;
}

}  // namespace biostream::app
