#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "biostream/dsp/pipeline.hpp"
#include "biostream/eval/stats.hpp"
#include "biostream/gaze/fixation.hpp"
#include "biostream/sim/cardiac.hpp"
#include "biostream/sim/gaze.hpp"

namespace biostream::eval {

// ---------------------------------------------------------------- PPG

struct PpgScenarioOptions {
  sim::Activity activity = sim::Activity::rest;
  double duration_s = 120.0;
  bool anc = true;
  sim::SimConfig sim;
  dsp::PpgChainConfig ppg_chain;
  dsp::EcgChainConfig ecg_chain;
  ErrorSign sign = ErrorSign::ppg_minus_ecg;
};

/// Scenario defaults: resting HR 70 BPM, walking HR 90 BPM, RR jitter 20 ms.
inline PpgScenarioOptions default_ppg_scenario(sim::Activity activity, bool anc, std::uint64_t seed = 1) {
  PpgScenarioOptions o;
  o.activity = activity;
  o.anc = anc;
  o.sim.seed = seed;
  o.sim.hr_start_bpm = o.sim.hr_end_bpm = activity == sim::Activity::rest ? 70.0 : 90.0;
  o.sim.rr_jitter_ms = 20.0;
  o.ppg_chain.anc_enabled = anc;
  return o;
}

struct HrWindow {
  std::size_t index = 0;
  std::optional<double> hr_ppg;
  std::optional<double> hr_ecg;
  std::optional<double> hr_truth;
};

struct PpgScenarioReport {
  std::string scenario;  // rest | walk
  bool anc = false;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  double window_s = 15.0;
  double artifact_snr_db = 0.0;
  std::vector<HrWindow> windows;
  std::vector<double> normalized_error_pct;  // over windows where both rates exist
  std::optional<BlandAltmanReport> bland_altman;
  // summaries over paired windows
  double mean_abs_error_bpm = 0.0;          // |ppg - ecg|
  double mean_abs_normalized_error_pct = 0.0;
  double fraction_within_3bpm_of_truth = 0.0;
  std::size_t paired_windows = 0;
};

/// 60 / mean RR of the true beats inside each window.
inline std::vector<std::optional<double>> truth_heart_rate(std::span<const double> beats, double duration_s,
                                                           double window_s) {
  const auto n = static_cast<std::size_t>(std::floor(duration_s / window_s + 1e-9));
  std::vector<std::optional<double>> out(n);
  for (std::size_t w = 0; w < n; ++w) {
    std::vector<double> in;
    for (double b : beats)
      if (b >= static_cast<double>(w) * window_s && b < static_cast<double>(w + 1) * window_s) in.push_back(b);
    if (in.size() >= 2) out[w] = 60.0 * static_cast<double>(in.size() - 1) / (in.back() - in.front());
  }
  return out;
}

inline PpgScenarioReport run_ppg_scenario(const PpgScenarioOptions& o) {
  PpgScenarioReport rep;
  rep.scenario = std::string(sim::to_string(o.activity));
  rep.anc = o.anc;
  rep.seed = o.sim.seed;
  rep.duration_s = o.duration_s;
  rep.window_s = o.ppg_chain.window_s;
  if (o.duration_s <= 0.0) return rep;

  auto chain = o.ppg_chain;
  chain.anc_enabled = o.anc;
  const auto ppg = sim::synth_ppg_with_motion(o.sim, o.duration_s, o.activity);
  const auto ecg = sim::synth_ecg(o.sim, o.duration_s);
  rep.artifact_snr_db = ppg.artifact_snr_db;

  const auto ppg_res = dsp::run_ppg_chain(ppg.ppg, ppg.accel, 3, ppg.rate_hz, chain);
  const auto ecg_res = dsp::run_ecg_chain(ecg.samples, ecg.rate_hz, o.ecg_chain);
  const auto truth = truth_heart_rate(ecg.beat_times, o.duration_s, chain.window_s);

  std::vector<double> a, b;
  std::size_t within = 0, judged = 0;
  for (std::size_t w = 0; w < truth.size(); ++w) {
    HrWindow hw{w, w < ppg_res.hr_bpm.size() ? ppg_res.hr_bpm[w] : std::nullopt,
                w < ecg_res.hr_bpm.size() ? ecg_res.hr_bpm[w] : std::nullopt, truth[w]};
    if (hw.hr_ppg && hw.hr_ecg) {
      a.push_back(*hw.hr_ppg);
      b.push_back(*hw.hr_ecg);
    }
    if (hw.hr_truth) {
      ++judged;
      if (hw.hr_ppg && std::abs(*hw.hr_ppg - *hw.hr_truth) <= 3.0) ++within;
    }
    rep.windows.push_back(hw);
  }
  rep.paired_windows = a.size();
  rep.fraction_within_3bpm_of_truth = judged ? static_cast<double>(within) / static_cast<double>(judged) : 0.0;
  if (!a.empty()) {
    rep.normalized_error_pct = normalized_error(a, b, o.sign);
    double s = 0.0, sn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      s += std::abs(a[i] - b[i]);
      sn += std::abs(rep.normalized_error_pct[i]);
    }
    rep.mean_abs_error_bpm = s / static_cast<double>(a.size());
    rep.mean_abs_normalized_error_pct = sn / static_cast<double>(a.size());
  }
  if (a.size() >= 2) rep.bland_altman = bland_altman(a, b);
  return rep;
}

inline nlohmann::json to_json(const PpgScenarioReport& r) {
  nlohmann::json windows = nlohmann::json::array();
  const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  for (const auto& w : r.windows)
    windows.push_back({{"index", w.index}, {"hr_ppg", opt(w.hr_ppg)}, {"hr_ecg", opt(w.hr_ecg)}, {"hr_truth", opt(w.hr_truth)}});
  nlohmann::json j = {{"scenario", r.scenario},
                      {"anc", r.anc},
                      {"seed", r.seed},
                      {"duration_s", r.duration_s},
                      {"window_s", r.window_s},
                      {"artifact_snr_db", std::isfinite(r.artifact_snr_db) ? nlohmann::json(r.artifact_snr_db) : nlohmann::json(nullptr)},
                      {"windows", std::move(windows)},
                      {"normalized_error_pct", r.normalized_error_pct},
                      {"summary",
                       {{"paired_windows", r.paired_windows},
                        {"mean_abs_error_bpm", r.mean_abs_error_bpm},
                        {"mean_abs_normalized_error_pct", r.mean_abs_normalized_error_pct},
                        {"fraction_within_3bpm_of_truth", r.fraction_within_3bpm_of_truth}}}};
  j["bland_altman"] = r.bland_altman ? nlohmann::json(*r.bland_altman) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------- gaze

struct GazeScenarioOptions {
  std::size_t trials = 3;
  std::uint64_t seed = 1;
  gaze::ScreenGeometry geometry;
  double base_jitter_deg = 0.1;        // RMS radial jitter per sample
  double drift_deg = 0.42;             // constant offset after head movement
  double precision_bump_deg = 0.2;     // increase of RMS successive-sample angle
  std::size_t test_targets = 20;
  double rest_s = 30.0;
  double gaze_rate_hz = 30.0;
  gaze::FixationConfig fixation;
  double min_confidence = gaze::kDefaultMinConfidence;
};

struct GazeTrialMetrics {
  double calibration_residual_px = 0.0;
  double pre_accuracy_deg = 0.0;
  double post_accuracy_deg = 0.0;
  double pre_precision_deg = 0.0;
  double post_precision_deg = 0.0;
  std::size_t pre_fixations = 0;
  std::size_t post_fixations = 0;
  double drift_direction_rad = 0.0;
};

struct GazeScenarioReport {
  std::uint64_t seed = 0;
  std::vector<GazeTrialMetrics> trials;
  double mean_pre_accuracy_deg = 0.0;
  double mean_post_accuracy_deg = 0.0;
  double mean_pre_precision_deg = 0.0;
  double mean_post_precision_deg = 0.0;
  double accuracy_delta_deg() const { return mean_post_accuracy_deg - mean_pre_accuracy_deg; }
  double precision_delta_deg() const { return mean_post_precision_deg - mean_pre_precision_deg; }
};

/// Mean pupil position over each target's display window (confidence-gated).
inline std::vector<gaze::PupilPoint> pupil_centroids(const sim::GazeTrace& trace, std::size_t n_targets,
                                                     double min_confidence) {
  std::vector<gaze::PupilPoint> sum(n_targets);
  std::vector<std::size_t> count(n_targets, 0);
  for (std::size_t i = 0; i < trace.pupil.size(); ++i) {
    const auto& s = trace.pupil[i];
    if (s.confidence < min_confidence) continue;
    auto& c = sum[trace.target_index[i]];
    c.x += s.pupil.x;
    c.y += s.pupil.y;
    ++count[trace.target_index[i]];
  }
  for (std::size_t t = 0; t < n_targets; ++t) {
    if (count[t] == 0) throw invalid_argument("calibration target " + std::to_string(t) + " has no confident samples");
    sum[t].x /= static_cast<double>(count[t]);
    sum[t].y /= static_cast<double>(count[t]);
  }
  return sum;
}

struct GazeBlockMetrics {
  double accuracy_deg = 0.0;
  double precision_deg = 0.0;
  std::size_t fixations = 0;
};

inline GazeBlockMetrics evaluate_gaze_block(const sim::GazeTrace& trace, const gaze::CalibrationModel& model,
                                            std::span<const gaze::ScreenPoint> targets,
                                            const GazeScenarioOptions& o) {
  std::vector<gaze::GazeSample> mapped;
  for (const auto& s : trace.pupil)
    if (auto g = gaze::map_gaze(model, s, o.geometry, o.min_confidence)) mapped.push_back(*g);
  const auto fix = gaze::segment_fixations(mapped, o.geometry, o.fixation);
  const auto matches = gaze::match_fixations(fix, targets, o.geometry);
  if (matches.empty()) throw Error(ErrorCode::numerical, "gaze scenario: no fixation matched a target");
  GazeBlockMetrics m;
  std::vector<gaze::Fixation> matched;
  double acc = 0.0;
  for (const auto& mt : matches) {
    acc += mt.offset_deg;
    matched.push_back(fix[mt.fixation]);
  }
  m.accuracy_deg = acc / static_cast<double>(matches.size());
  m.precision_deg = gaze::gaze_precision(mapped, matched, o.geometry);
  m.fixations = matches.size();
  return m;
}

/// Per trial: 9-point calibration, 20 test targets, a rest period with head
/// movement (constant drift plus a jitter increase), 20 new test targets.
inline GazeScenarioReport run_gaze_scenario(const GazeScenarioOptions& o) {
  o.geometry.validate();
  GazeScenarioReport rep;
  rep.seed = o.seed;
  // successive-sample RMS angle is sqrt(2) x the radial RMS jitter
  const double post_jitter = o.base_jitter_deg + o.precision_bump_deg / std::sqrt(2.0);
  for (std::size_t trial = 0; trial < o.trials; ++trial) {
    sim::SimConfig cfg;
    cfg.seed = o.seed * 1000003ULL + trial;
    cfg.screen = o.geometry;
    cfg.gaze_rate_hz = o.gaze_rate_hz;
    auto dir_rng = sim::make_rng(cfg.seed, 0xD1F7);
    const double direction = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(dir_rng);

    GazeTrialMetrics tm;
    tm.drift_direction_rad = direction;

    const auto calib_targets = sim::calibration_grid(o.geometry);
    sim::GazeScript calib{calib_targets, 0.5, 0.0, o.base_jitter_deg, std::nullopt, 0.0, 0.0, std::nullopt};
    cfg.seed += 0x100;
    const auto calib_trace = sim::synth_gaze(cfg, calib);
    const auto centroids = pupil_centroids(calib_trace, calib_targets.size(), o.min_confidence);
    const auto model = gaze::fit_calibration(centroids, calib_targets);
    tm.calibration_residual_px = model.residual_rms_px;

    const auto pre_targets = sim::scatter_targets(o.geometry, o.test_targets, cfg.seed + 1);
    const auto post_targets = sim::scatter_targets(o.geometry, o.test_targets, cfg.seed + 2);
    const double t_pre = 0.5 * static_cast<double>(calib_targets.size());
    sim::GazeScript pre{pre_targets, 0.5, t_pre, o.base_jitter_deg, std::nullopt, 0.0, 0.0, std::nullopt};
    cfg.seed += 0x100;
    const auto pre_trace = sim::synth_gaze(cfg, pre);
    const double t_post = t_pre + 0.5 * static_cast<double>(pre_targets.size()) + o.rest_s;
    sim::GazeScript post{post_targets, 0.5, t_post, o.base_jitter_deg, std::size_t{0}, o.drift_deg, direction, post_jitter};
    cfg.seed += 0x100;
    const auto post_trace = sim::synth_gaze(cfg, post);

    const auto pre_m = evaluate_gaze_block(pre_trace, model, pre_targets, o);
    const auto post_m = evaluate_gaze_block(post_trace, model, post_targets, o);
    tm.pre_accuracy_deg = pre_m.accuracy_deg;
    tm.pre_precision_deg = pre_m.precision_deg;
    tm.pre_fixations = pre_m.fixations;
    tm.post_accuracy_deg = post_m.accuracy_deg;
    tm.post_precision_deg = post_m.precision_deg;
    tm.post_fixations = post_m.fixations;
    rep.trials.push_back(tm);
  }
  const double n = static_cast<double>(rep.trials.size());
  for (const auto& t : rep.trials) {
    rep.mean_pre_accuracy_deg += t.pre_accuracy_deg / n;
    rep.mean_post_accuracy_deg += t.post_accuracy_deg / n;
    rep.mean_pre_precision_deg += t.pre_precision_deg / n;
    rep.mean_post_precision_deg += t.post_precision_deg / n;
  }
  return rep;
}

inline nlohmann::json to_json(const GazeScenarioReport& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials)
    trials.push_back({{"calibration_residual_px", t.calibration_residual_px},
                      {"gaze_pre", {{"accuracy_deg", t.pre_accuracy_deg}, {"precision_deg", t.pre_precision_deg}, {"fixations", t.pre_fixations}}},
                      {"gaze_post", {{"accuracy_deg", t.post_accuracy_deg}, {"precision_deg", t.post_precision_deg}, {"fixations", t.post_fixations}}},
                      {"drift_direction_rad", t.drift_direction_rad}});
  return {{"scenario", "gaze"},
          {"seed", r.seed},
          {"trials", std::move(trials)},
          {"summary",
           {{"mean_pre_accuracy_deg", r.mean_pre_accuracy_deg},
            {"mean_post_accuracy_deg", r.mean_post_accuracy_deg},
            {"mean_pre_precision_deg", r.mean_pre_precision_deg},
            {"mean_post_precision_deg", r.mean_post_precision_deg},
            {"accuracy_delta_deg", r.accuracy_delta_deg()},
            {"precision_delta_deg", r.precision_delta_deg()}}}};
}

}  // namespace biostream::eval
