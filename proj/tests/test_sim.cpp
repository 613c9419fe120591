#include <gtest/gtest.h>

#include <cmath>

#include <biostream/dsp/peaks.hpp>
#include <biostream/gaze/fixation.hpp>
#include <biostream/sim/cardiac.hpp>
#include <biostream/sim/eeg.hpp>
#include <biostream/sim/gaze.hpp>
#include <biostream/sim/link.hpp>
#include <biostream/stream/clock.hpp>

using namespace biostream;
using namespace biostream::sim;

namespace {

SimConfig hr_config(double bpm, std::uint64_t seed = 1, double jitter_ms = 0.0) {
  SimConfig c;
  c.seed = seed;
  c.hr_start_bpm = c.hr_end_bpm = bpm;
  c.rr_jitter_ms = jitter_ms;
  return c;
}

std::vector<std::vector<gaze::ScreenPoint>> group_by_target(const GazeTrace& trace, std::size_t n_targets) {
  std::vector<std::vector<gaze::ScreenPoint>> g(n_targets);
  for (std::size_t i = 0; i < trace.gaze.size(); ++i) g[trace.target_index[i]].push_back(trace.gaze[i]);
  return g;
}

gaze::ScreenPoint mean_point(const std::vector<gaze::ScreenPoint>& pts) {
  gaze::ScreenPoint m;
  for (const auto& p : pts) m.x += p.x, m.y += p.y;
  m.x /= static_cast<double>(pts.size());
  m.y /= static_cast<double>(pts.size());
  return m;
}

}  // namespace

TEST(Config, ValidationAndJson) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.ppg_rate_hz = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.motion_fir.pop_back();
  EXPECT_THROW(c.validate(), Error);
  const auto j = nlohmann::json::parse(R"({"seed": 9, "hr_bpm": 90, "rr_jitter_ms": 20})");
  const auto parsed = j.get<SimConfig>();
  EXPECT_EQ(parsed.seed, 9u);
  EXPECT_EQ(parsed.hr_start_bpm, 90.0);
  EXPECT_EQ(parsed.hr_end_bpm, 90.0);
  EXPECT_THROW(nlohmann::json::parse(R"({"ppg_rate_hz": -1})").get<SimConfig>(), Error);
}

TEST(Ecg, SixtyBpmTenSeconds) {
  const auto e = synth_ecg(hr_config(60), 10.0);
  ASSERT_EQ(e.beat_times.size(), 10u);
  for (std::size_t i = 1; i < e.beat_times.size(); ++i) EXPECT_NEAR(e.beat_times[i] - e.beat_times[i - 1], 1.0, 1e-12);
  EXPECT_EQ(e.samples.size(), 10000u);
}

TEST(Ecg, SeventyTwoBpmFifteenSeconds) {
  EXPECT_EQ(synth_ecg(hr_config(72), 15.0).beat_times.size(), 18u);
}

TEST(Ecg, Deterministic) {
  const auto a = synth_ecg(hr_config(75, 42, 30), 20.0);
  const auto b = synth_ecg(hr_config(75, 42, 30), 20.0);
  const auto c = synth_ecg(hr_config(75, 43, 30), 20.0);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.beat_times, b.beat_times);
  EXPECT_NE(a.samples, c.samples);
}

TEST(Ecg, QrsPeaksSitOnBeats) {
  auto cfg = hr_config(80, 3, 20);
  cfg.ecg_noise = 0;
  const auto e = synth_ecg(cfg, 30.0);
  const auto peaks = dsp::detect_peaks(e.samples, e.rate_hz, {0.3, 0.5});
  ASSERT_EQ(peaks.size(), e.beat_times.size());
  for (std::size_t i = 0; i < peaks.size(); ++i)
    EXPECT_LE(std::abs(static_cast<double>(peaks[i]) - e.beat_times[i] * e.rate_hz), 1.0);
}

TEST(Ecg, RampProfile) {
  auto cfg = hr_config(60);
  cfg.hr_end_bpm = 120;
  const auto e = synth_ecg(cfg, 60.0);
  const auto& b = e.beat_times;
  ASSERT_GT(b.size(), 10u);
  EXPECT_GT(b[1] - b[0], b[b.size() - 1] - b[b.size() - 2]);
}

TEST(Ecg, ZeroDuration) {
  const auto e = synth_ecg(hr_config(60), 0.0);
  EXPECT_TRUE(e.samples.empty());
  EXPECT_TRUE(e.beat_times.empty());
}

TEST(Ppg, RestIsCleanPlusSensorNoise) {
  auto cfg = hr_config(70, 5);
  const auto p = synth_ppg_with_motion(cfg, 60.0, Activity::rest);
  ASSERT_EQ(p.ppg.size(), 6000u);
  double ss = 0;
  for (std::size_t i = 0; i < p.ppg.size(); ++i) {
    EXPECT_EQ(p.artifact[i], 0.0);
    ss += (p.ppg[i] - p.clean[i]) * (p.ppg[i] - p.clean[i]);
  }
  EXPECT_NEAR(std::sqrt(ss / 6000.0), cfg.ppg_noise, 0.1 * cfg.ppg_noise);
  cfg.ppg_noise = 0;
  const auto q = synth_ppg_with_motion(cfg, 60.0, Activity::rest);
  EXPECT_EQ(q.ppg, q.clean);
  // accelerometer carries only its noise floor
  double acc = 0;
  for (double a : q.accel) acc += a * a;
  EXPECT_NEAR(std::sqrt(acc / static_cast<double>(q.accel.size())), cfg.accel_noise, 0.1 * cfg.accel_noise);
}

TEST(Ppg, WalkArtifactSnr) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (double snr : {0.0, -5.0, 6.0}) {
      auto cfg = hr_config(90, seed, 20);
      cfg.artifact_snr_db = snr;
      const auto p = synth_ppg_with_motion(cfg, 120.0, Activity::walk);
      double mean = 0;
      for (double c : p.clean) mean += c;
      mean /= static_cast<double>(p.clean.size());
      double pc = 0, pa = 0;
      for (std::size_t i = 0; i < p.clean.size(); ++i) {
        pc += (p.clean[i] - mean) * (p.clean[i] - mean);
        pa += p.artifact[i] * p.artifact[i];
      }
      EXPECT_NEAR(10 * std::log10(pc / pa), snr, 1.0);
      EXPECT_NEAR(p.artifact_snr_db, snr, 1.0);
    }
  }
}

TEST(Ppg, ArtifactIsCausalFirOfAccel) {
  auto cfg = hr_config(90, 8);
  const auto p = synth_ppg_with_motion(cfg, 20.0, Activity::walk);
  const std::size_t n = p.clean.size();
  std::vector<double> raw(n, 0.0);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < cfg.motion_fir[k].size() && j <= i; ++j)
        raw[i] += cfg.motion_fir[k][j] * p.accel[(i - j) * 3 + k];
  // one common gain maps the oracle onto the emitted artifact
  std::size_t ref = 0;
  while (std::abs(raw[ref]) < 1e-3) ++ref;
  const double gain = p.artifact[ref] / raw[ref];
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p.artifact[i], gain * raw[i], 1e-9);
}

TEST(Ppg, CleanPeaksMatchTruth) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const double duration = 60.0;
    const auto p = synth_ppg_with_motion(hr_config(75, seed, 20), duration, Activity::walk);
    const auto peaks = dsp::detect_peaks(p.clean, p.rate_hz, {0.3, 0.2});
    // a pulse cut by the end of the record may or may not show a maximum
    std::vector<double> truth;
    for (double t : p.peak_times)
      if (t < duration - 0.5) truth.push_back(t);
    ASSERT_GE(peaks.size(), truth.size());
    ASSERT_LE(peaks.size(), truth.size() + 1);
    for (std::size_t i = 0; i < truth.size(); ++i)
      EXPECT_LE(std::abs(static_cast<double>(peaks[i]) - truth[i] * p.rate_hz), 1.0);
  }
}

TEST(Ppg, PulseTransitDelay) {
  const auto p = synth_ppg_with_motion(hr_config(60), 10.0, Activity::rest);
  ASSERT_EQ(p.peak_times.size(), p.beat_times.size());
  for (std::size_t i = 0; i < p.peak_times.size(); ++i) EXPECT_NEAR(p.peak_times[i] - p.beat_times[i], 0.2, 1e-12);
}

TEST(Ppg, DeterministicAndQuantized) {
  auto cfg = hr_config(80, 12, 20);
  const auto a = synth_ppg_with_motion(cfg, 30.0, Activity::walk);
  const auto b = synth_ppg_with_motion(cfg, 30.0, Activity::walk);
  EXPECT_EQ(a.ppg, b.ppg);
  EXPECT_EQ(a.accel, b.accel);
  cfg.quantize_12bit = true;
  const auto q = synth_ppg_with_motion(cfg, 30.0, Activity::walk);
  const double step = 8.0 / 4095.0;
  for (double v : q.ppg) {
    const double code = (v + 4.0) / step;
    EXPECT_NEAR(code, std::round(code), 1e-6);
  }
}

TEST(Eeg, IdentityMixingPassesSourcesThrough) {
  SimConfig cfg;
  const auto m = synth_eeg_mixture(cfg, 10.0, 4, {.identity_mixing = true});
  EXPECT_EQ(m.channels, m.sources);
  EXPECT_EQ(m.channels.rows(), 1280);
}

TEST(Eeg, MixtureDefinitionAndConditioning) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SimConfig cfg;
    cfg.seed = seed;
    const auto m = synth_eeg_mixture(cfg, 5.0, 4);
    EXPECT_LT(condition_number(m.mixing), 10.0);
    const Eigen::MatrixXd x = m.sources * m.mixing.transpose();
    EXPECT_LT((x - m.channels).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Eeg, SourcesAreUnitVarianceLaplacian) {
  SimConfig cfg;
  const auto m = synth_eeg_mixture(cfg, 600.0, 3);
  for (Eigen::Index k = 0; k < 3; ++k) {
    const auto col = m.sources.col(k).array();
    const double mean = col.mean();
    const double var = (col - mean).square().mean();
    const double kurt = (col - mean).pow(4).mean() / (var * var);
    EXPECT_NEAR(mean, 0.0, 0.03);
    EXPECT_NEAR(var, 1.0, 0.05);
    EXPECT_NEAR(kurt, 6.0, 0.8);  // Laplace excess kurtosis 3
  }
}

TEST(Eeg, BlinkSource) {
  SimConfig cfg;
  const auto m = synth_eeg_mixture(cfg, 60.0, 4, {.with_blink = true});
  ASSERT_TRUE(m.blink_source);
  EXPECT_EQ(*m.blink_source, 3u);
  const auto col = m.sources.col(3).array();
  EXPECT_NEAR(col.mean(), 0.0, 1e-9);
  EXPECT_NEAR((col - col.mean()).square().mean(), 1.0, 1e-9);
}

TEST(Eeg, Deterministic) {
  SimConfig cfg;
  cfg.seed = 99;
  EXPECT_EQ(synth_eeg_mixture(cfg, 5.0, 4).channels, synth_eeg_mixture(cfg, 5.0, 4).channels);
}

TEST(Gaze, NoiseFreeGazeOnTargets) {
  SimConfig cfg;
  GazeScript s;
  s.targets = calibration_grid(cfg.screen);
  const auto trace = synth_gaze(cfg, s);
  ASSERT_EQ(trace.gaze.size(), 9u * 15u);
  for (std::size_t i = 0; i < trace.gaze.size(); ++i) {
    const auto& t = s.targets[trace.target_index[i]];
    EXPECT_EQ(trace.gaze[i], t);
    // pupil goes through the ground-truth map back to the target
    const auto back = trace.truth_map.evaluate(trace.pupil[i].pupil);
    EXPECT_NEAR(back.x, t.x, 1e-6);
    EXPECT_NEAR(back.y, t.y, 1e-6);
  }
}

TEST(Gaze, DriftOffsetsPostMovementCentroids) {
  SimConfig cfg;
  GazeScript s;
  s.targets = scatter_targets(cfg.screen, 20, 3);
  s.movement_before = 10;
  s.drift_deg = 0.42;
  s.drift_direction_rad = 1.1;
  const auto trace = synth_gaze(cfg, s);
  ASSERT_TRUE(trace.movement_time);
  const auto groups = group_by_target(trace, s.targets.size());
  for (std::size_t t = 0; t < s.targets.size(); ++t) {
    const double off = gaze::angular_offset(mean_point(groups[t]), s.targets[t], cfg.screen);
    EXPECT_NEAR(off, t < 10 ? 0.0 : 0.42, 1e-9) << t;
  }
}

TEST(Gaze, JitterPrecisionIsSqrtTwoSigma) {
  SimConfig cfg;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    GazeScript s;
    s.targets = scatter_targets(cfg.screen, 20, seed);
    s.jitter_deg = 0.2;
    const auto trace = synth_gaze(cfg, s);
    const double p = gaze::gaze_precision(group_by_target(trace, s.targets.size()), cfg.screen);
    EXPECT_NEAR(p, 0.2 * std::sqrt(2.0), 0.1 * 0.2 * std::sqrt(2.0)) << seed;
  }
}

TEST(Gaze, ScatterRespectsMargin) {
  gaze::ScreenGeometry g;
  const auto pts = scatter_targets(g, 500, 7);
  for (const auto& p : pts) {
    EXPECT_GE(p.x, 0.05 * g.width_px);
    EXPECT_LE(p.x, 0.95 * g.width_px);
    EXPECT_GE(p.y, 0.05 * g.height_px);
    EXPECT_LE(p.y, 0.95 * g.height_px);
  }
  EXPECT_EQ(pts.size(), 500u);
}

TEST(Link, ZeroLatencyIsTransparent) {
  std::vector<TimedMessage> frames;
  for (int i = 0; i < 50; ++i)
    frames.push_back({0.1 * i, stream::wire::MarkerFrame{1, 0.1 * i, "m" + std::to_string(i)}});
  const auto r = simulate_link(frames, LinkModel{});
  ASSERT_EQ(r.delivered.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(r.delivered[i].arrival_local_s, frames[i].time_s);
    EXPECT_EQ(r.delivered[i].message, frames[i].message);
  }
  for (const auto& b : r.bursts) EXPECT_EQ(stream::estimate_clock_offset(b).offset_s, 0.0);
}

TEST(Link, TenMillisecondOffsetRecovered) {
  // the min-RTT error is half the delay asymmetry of the chosen exchange, so
  // the 1 ms bound holds for most bursts and the rtt/2 bound for all of them
  int within = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    LinkModel link;
    link.clock_offset_s = 0.010;
    link.jitter_s = 0.005;
    link.seed = seed;
    const auto r = simulate_link({{30.0, stream::wire::Bye{}}}, link);
    ASSERT_GE(r.bursts.size(), 2u);
    for (const auto& b : r.bursts) {
      const auto est = stream::estimate_clock_offset(b);
      const double err = std::abs(est.offset_s - 0.010);
      EXPECT_LE(err, est.rtt_s / 2 + 1e-15);
      within += err <= 0.001;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(within) / total, 0.85);
  LinkModel link;
  link.clock_offset_s = 0.010;
  link.jitter_s = 0.005;
  const auto r = simulate_link({{0.0, stream::wire::Bye{}}}, link);
  EXPECT_NEAR(stream::estimate_clock_offset(r.bursts[0]).offset_s, 0.010, 0.001);
}

TEST(Link, FifoUnderJitter) {
  LinkModel link;
  link.base_latency_s = 0.01;
  link.jitter_s = 0.2;  // much larger than frame spacing
  link.seed = 4;
  std::vector<TimedMessage> frames;
  for (int i = 0; i < 500; ++i) frames.push_back({0.01 * i, stream::wire::MarkerFrame{2, 0.01 * i, std::to_string(i)}});
  const auto r = simulate_link(frames, link);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(r.delivered[i].message, frames[i].message);
    EXPECT_GE(r.delivered[i].arrival_local_s, frames[i].time_s + link.base_latency_s);
    if (i > 0) EXPECT_GE(r.delivered[i].arrival_local_s, r.delivered[i - 1].arrival_local_s);
  }
}

TEST(Link, DriftingClock) {
  LinkModel link;
  link.clock_drift_ppm = 50;
  link.clock_offset_s = -0.3;
  EXPECT_NEAR(link.local_from_remote(link.remote_from_local(123.456)), 123.456, 1e-12);
  const auto r = simulate_link({{100.0, stream::wire::Bye{}}}, link);
  for (std::size_t k = 0; k < r.bursts.size(); ++k) {
    const double t = r.bursts[k].front().t0;
    // offset drifts by 50 ppm across the 90 ms burst
    EXPECT_NEAR(stream::estimate_clock_offset(r.bursts[k]).offset_s, link.remote_from_local(t) - t, 1e-5);
  }
}
