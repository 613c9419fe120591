#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "biostream/error.hpp"
#include "biostream/gaze/geometry.hpp"

namespace biostream::sim {

enum class Activity { rest, walk };

inline Activity activity_from_string(std::string_view s) {
  if (s == "rest") return Activity::rest;
  if (s == "walk") return Activity::walk;
  throw invalid_argument("unknown scenario '" + std::string(s) + "' (expected rest or walk)");
}
inline std::string_view to_string(Activity a) { return a == Activity::rest ? "rest" : "walk"; }

struct SimConfig {
  std::uint64_t seed = 1;

  double ecg_rate_hz = 1000.0;
  double ppg_rate_hz = 100.0;
  double eeg_rate_hz = 128.0;
  double gaze_rate_hz = 30.0;

  // heart rate ramps linearly from start to end over the generated duration
  double hr_start_bpm = 72.0;
  double hr_end_bpm = 72.0;
  double rr_jitter_ms = 0.0;

  double qrs_width_s = 0.02;  // Gaussian full width at half maximum
  double ecg_noise = 0.01;
  double ppg_noise = 0.01;
  double accel_noise = 0.05;
  double pulse_transit_s = 0.2;
  double walk_cadence_hz = 2.0;
  double artifact_snr_db = 0.0;
  // causal coupling filter from each accelerometer axis into the PPG
  std::vector<std::vector<double>> motion_fir{{0.6, 0.3, 0.1}, {-0.4, 0.25, 0.1, 0.05}, {0.3, -0.2, 0.15}};
  bool quantize_12bit = false;

  gaze::ScreenGeometry screen;
  double gaze_jitter_deg = 0.0;
  double fixation_s = 0.5;

  void validate() const {
    if (!(ecg_rate_hz > 0 && ppg_rate_hz > 0 && eeg_rate_hz > 0 && gaze_rate_hz > 0))
      throw invalid_argument("SimConfig: sample rates must be positive");
    if (!(hr_start_bpm > 0 && hr_end_bpm > 0)) throw invalid_argument("SimConfig: heart rate must be positive");
    if (motion_fir.size() != 3) throw invalid_argument("SimConfig: need one coupling filter per accelerometer axis");
    screen.validate();
  }
};

/// Independent generator stream per purpose, all derived from the seed.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

inline void from_json(const nlohmann::json& j, SimConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.ecg_rate_hz = j.value("ecg_rate_hz", c.ecg_rate_hz);
  c.ppg_rate_hz = j.value("ppg_rate_hz", c.ppg_rate_hz);
  c.eeg_rate_hz = j.value("eeg_rate_hz", c.eeg_rate_hz);
  c.gaze_rate_hz = j.value("gaze_rate_hz", c.gaze_rate_hz);
  if (j.contains("hr_bpm")) c.hr_start_bpm = c.hr_end_bpm = j.at("hr_bpm").get<double>();
  c.hr_start_bpm = j.value("hr_start_bpm", c.hr_start_bpm);
  c.hr_end_bpm = j.value("hr_end_bpm", c.hr_end_bpm);
  c.rr_jitter_ms = j.value("rr_jitter_ms", c.rr_jitter_ms);
  c.ecg_noise = j.value("ecg_noise", c.ecg_noise);
  c.ppg_noise = j.value("ppg_noise", c.ppg_noise);
  c.accel_noise = j.value("accel_noise", c.accel_noise);
  c.walk_cadence_hz = j.value("walk_cadence_hz", c.walk_cadence_hz);
  c.artifact_snr_db = j.value("artifact_snr_db", c.artifact_snr_db);
  if (j.contains("motion_fir")) c.motion_fir = j.at("motion_fir").get<std::vector<std::vector<double>>>();
  c.quantize_12bit = j.value("quantize_12bit", c.quantize_12bit);
  c.gaze_jitter_deg = j.value("gaze_jitter_deg", c.gaze_jitter_deg);
  if (j.contains("screen")) {
    const auto& s = j.at("screen");
    c.screen.width_px = s.value("width_px", c.screen.width_px);
    c.screen.height_px = s.value("height_px", c.screen.height_px);
    c.screen.pixel_pitch_mm = s.value("pixel_pitch_mm", c.screen.pixel_pitch_mm);
    c.screen.viewing_distance_mm = s.value("viewing_distance_mm", c.screen.viewing_distance_mm);
  }
  c.validate();
}

}  // namespace biostream::sim
