#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <biostream/eval/report.hpp>
#include <biostream/eval/scenarios.hpp>
#include <biostream/eval/stats.hpp>

using namespace biostream;
using namespace biostream::eval;

namespace {

struct BaOracle {
  double bias, sd;
};

// two-pass textbook statistics in long double
BaOracle ba_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) - b[i];
  const long double mean = s / a.size();
  long double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i] - mean;
    ss += d * d;
  }
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(ss / (a.size() - 1)))};
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("biostream_eval_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(NormalizedError, Examples) {
  const std::vector<double> same{72, 80, 64};
  for (double e : normalized_error(same, same)) EXPECT_EQ(e, 0.0);
  const std::vector<double> ppg{80, 80}, ecg{76, 84};
  const auto e = normalized_error(ppg, ecg);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_DOUBLE_EQ(e[0], 5.0);
  EXPECT_DOUBLE_EQ(e[1], -5.0);
  const std::vector<double> one{72};
  EXPECT_EQ(normalized_error(one, one), std::vector<double>{0.0});
}

TEST(NormalizedError, Errors) {
  const std::vector<double> z{0, 0}, x{70, 70}, y{70};
  EXPECT_THROW(normalized_error(z, x), Error);
  EXPECT_THROW(normalized_error(x, y), Error);
  EXPECT_TRUE(normalized_error(std::vector<double>{}, std::vector<double>{}).empty());
}

TEST(NormalizedError, BruteForceOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> hr(40, 180);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = hr(rng), b[i] = hr(rng);
    long double mean = 0;
    for (double v : a) mean += v;
    mean /= n;
    const auto e = normalized_error(a, b);
    for (std::size_t i = 0; i < n; ++i)
      EXPECT_NEAR(e[i], static_cast<double>(100.0L * (static_cast<long double>(a[i]) - b[i]) / mean), 1e-9);
  }
}

TEST(NormalizedError, NumeratorFlipsUnderSwap) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> hr(50, 150);
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<double> a(10), b(10);
    for (std::size_t i = 0; i < 10; ++i) a[i] = hr(rng), b[i] = hr(rng);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < 10; ++i) ma += a[i] / 10, mb += b[i] / 10;
    const auto ab = normalized_error(a, b);
    const auto ba = normalized_error(b, a);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(ab[i] * ma, -ba[i] * mb, 1e-9);
    // same denominator, other sign convention: exact negation
    const auto flipped = normalized_error(a, b, ErrorSign::ecg_minus_ppg);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(flipped[i], -ab[i]);
  }
}

TEST(BlandAltman, Examples) {
  const std::vector<double> a{70, 75, 80, 85};
  auto r = bland_altman(a, a);
  EXPECT_EQ(r.bias, 0.0);
  EXPECT_EQ(r.loa_high - r.loa_low, 0.0);
  std::vector<double> b = a;
  for (auto& v : b) v -= 2;
  r = bland_altman(a, b);
  EXPECT_DOUBLE_EQ(r.bias, 2.0);
  EXPECT_NEAR(r.sd, 0.0, 1e-12);
  ASSERT_EQ(r.points.size(), 4u);
  EXPECT_DOUBLE_EQ(r.points[0].mean, 69.0);
  EXPECT_DOUBLE_EQ(r.points[0].difference, 2.0);
  EXPECT_THROW(bland_altman(std::vector<double>{1}, std::vector<double>{1}), Error);
  EXPECT_THROW(bland_altman(a, std::vector<double>{1, 2}), Error);
}

TEST(BlandAltman, BruteForceOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> hr(40, 180);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = hr(rng), b[i] = hr(rng);
    const auto r = bland_altman(a, b);
    const auto o = ba_oracle(a, b);
    EXPECT_NEAR(r.bias, o.bias, 1e-9);
    EXPECT_NEAR(r.sd, o.sd, 1e-9);
    EXPECT_NEAR(r.loa_low, o.bias - 1.96 * o.sd, 1e-9);
    EXPECT_NEAR(r.loa_high, o.bias + 1.96 * o.sd, 1e-9);
    EXPECT_LE(r.loa_low, r.bias);
    EXPECT_LE(r.bias, r.loa_high);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(r.points[i].mean, (a[i] + b[i]) / 2, 1e-12);
      EXPECT_NEAR(r.points[i].difference, a[i] - b[i], 1e-12);
    }
  }
}

TEST(BlandAltman, BiasAntisymmetricExactly) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> hr(40, 180);
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<double> a(20), b(20);
    for (std::size_t i = 0; i < 20; ++i) a[i] = hr(rng), b[i] = hr(rng);
    EXPECT_EQ(bland_altman(a, b).bias, -bland_altman(b, a).bias);
    EXPECT_EQ(bland_altman(a, b).sd, bland_altman(b, a).sd);
  }
}

TEST(TruthHeartRate, WindowCounts) {
  std::vector<double> beats;
  for (double t = 0.5; t < 60; t += 1.0) beats.push_back(t);
  const auto hr = truth_heart_rate(beats, 60.0, 15.0);
  ASSERT_EQ(hr.size(), 4u);
  for (const auto& h : hr) {
    ASSERT_TRUE(h);
    EXPECT_NEAR(*h, 60.0, 1e-9);
  }
}

TEST(PpgScenario, ZeroDurationIsEmpty) {
  auto o = default_ppg_scenario(sim::Activity::rest, true);
  o.duration_s = 0;
  const auto r = run_ppg_scenario(o);
  EXPECT_TRUE(r.windows.empty());
  EXPECT_TRUE(r.normalized_error_pct.empty());
  EXPECT_FALSE(r.bland_altman);
  EXPECT_EQ(r.paired_windows, 0u);
}

TEST(PpgScenario, DeterministicReruns) {
  const auto o = default_ppg_scenario(sim::Activity::walk, true, 17);
  const auto a = to_json(run_ppg_scenario(o)).dump();
  const auto b = to_json(run_ppg_scenario(o)).dump();
  EXPECT_EQ(a, b);
  const auto c = to_json(run_ppg_scenario(default_ppg_scenario(sim::Activity::walk, true, 18))).dump();
  EXPECT_NE(a, c);
}

TEST(PpgScenario, RestAncIsIndistinguishable) {
  const auto on = run_ppg_scenario(default_ppg_scenario(sim::Activity::rest, true, 1));
  const auto off = run_ppg_scenario(default_ppg_scenario(sim::Activity::rest, false, 1));
  EXPECT_EQ(on.windows.size(), 8u);
  EXPECT_LT(on.mean_abs_error_bpm, 2.0);
  EXPECT_LT(off.mean_abs_error_bpm, 2.0);
  EXPECT_LT(std::abs(on.mean_abs_error_bpm - off.mean_abs_error_bpm), 0.5);
}

TEST(PpgScenario, WalkAncHalvesError) {
  const auto on = run_ppg_scenario(default_ppg_scenario(sim::Activity::walk, true, 1));
  const auto off = run_ppg_scenario(default_ppg_scenario(sim::Activity::walk, false, 1));
  EXPECT_NEAR(on.artifact_snr_db, 0.0, 1.0);
  EXPECT_LE(on.mean_abs_normalized_error_pct, 0.5 * off.mean_abs_normalized_error_pct);
  EXPECT_GE(on.fraction_within_3bpm_of_truth, 0.9);
}

TEST(PpgScenario, JsonFields) {
  const auto r = run_ppg_scenario(default_ppg_scenario(sim::Activity::rest, false, 5));
  const auto j = to_json(r);
  EXPECT_EQ(j.at("scenario"), "rest");
  EXPECT_EQ(j.at("anc"), false);
  EXPECT_EQ(j.at("seed"), 5);
  EXPECT_EQ(j.at("windows").size(), r.windows.size());
  EXPECT_TRUE(j.at("bland_altman").is_object());
}

TEST(GazeScenario, NoiseFreeCalibrationIsAccurate) {
  GazeScenarioOptions o;
  o.base_jitter_deg = 0;
  o.drift_deg = 0;
  o.precision_bump_deg = 0;
  const auto r = run_gaze_scenario(o);
  ASSERT_EQ(r.trials.size(), 3u);
  for (const auto& t : r.trials) {
    EXPECT_LT(t.calibration_residual_px, 1e-6);
    EXPECT_LT(t.pre_accuracy_deg, 0.05);
    EXPECT_LT(t.post_accuracy_deg, 0.05);
    EXPECT_EQ(t.pre_fixations, 20u);
  }
}

TEST(GazeScenario, ZeroDriftLeavesAccuracyUnchanged) {
  GazeScenarioOptions o;
  o.drift_deg = 0;
  o.precision_bump_deg = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    o.seed = seed;
    const auto r = run_gaze_scenario(o);
    EXPECT_NEAR(r.accuracy_delta_deg(), 0.0, 0.05) << seed;
  }
}

TEST(GazeScenario, DriftAndJitterBumpRecovered) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GazeScenarioOptions o;
    o.seed = seed;
    const auto r = run_gaze_scenario(o);
    EXPECT_NEAR(r.accuracy_delta_deg(), 0.42, 0.1) << seed;
    EXPECT_NEAR(r.precision_delta_deg(), 0.2, 0.05) << seed;
  }
}

TEST(GazeScenario, DeterministicReruns) {
  GazeScenarioOptions o;
  o.seed = 9;
  EXPECT_EQ(to_json(run_gaze_scenario(o)).dump(), to_json(run_gaze_scenario(o)).dump());
}

TEST(Reports, PpgFilesWritten) {
  const auto dir = scratch_dir("ppg");
  std::vector<PpgScenarioReport> reps{run_ppg_scenario(default_ppg_scenario(sim::Activity::rest, true, 2))};
  const auto files = write_ppg_report(reps, dir, true);
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  const auto j = nlohmann::json::parse(slurp(dir / "ppg_report.json"));
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), 1u);
  bool has_svg = false, has_csv = false;
  for (const auto& f : files) {
    has_svg |= f.extension() == ".svg";
    if (f.extension() == ".csv") {
      has_csv = true;
      const auto text = slurp(f);
      EXPECT_EQ(text.rfind("window,start_s,hr_ppg,hr_ecg,hr_truth\n", 0), 0u);
      EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
    }
  }
  EXPECT_TRUE(has_svg);
  EXPECT_TRUE(has_csv);
  std::filesystem::remove_all(dir);
}

TEST(Reports, GazeFilesWritten) {
  const auto dir = scratch_dir("gaze");
  const auto files = write_gaze_report(run_gaze_scenario({}), dir, true);
  EXPECT_TRUE(std::filesystem::exists(dir / "gaze_report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "gaze_trials.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "gaze_accuracy.svg"));
  const auto svg = slurp(dir / "gaze_precision.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Reports, UnwritableDirectoryIsIoError) {
  try {
    write_text_file("/proc/biostream_cannot_write/x.json", "{}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
}
