#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <biostream/gaze/calibration.hpp>
#include <biostream/gaze/fixation.hpp>
#include <biostream/gaze/geometry.hpp>
#include <biostream/gaze/objects.hpp>
#include <biostream/sim/gaze.hpp>

using namespace biostream;
using namespace biostream::gaze;

namespace {

ScreenGeometry pitch_quarter() {
  ScreenGeometry g;
  g.pixel_pitch_mm = 0.25;
  g.viewing_distance_mm = 700.0;
  return g;
}

std::vector<ScreenPoint> grid9(const ScreenGeometry& g) {
  std::vector<ScreenPoint> pts;
  for (double fy : {0.1, 0.5, 0.9})
    for (double fx : {0.1, 0.5, 0.9}) pts.push_back({fx * g.width_px, fy * g.height_px});
  return pts;
}

std::vector<GazeSample> constant_run(ScreenPoint p, double t0, double seconds, double rate) {
  std::vector<GazeSample> out;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  for (std::size_t i = 0; i < n; ++i) out.push_back({t0 + static_cast<double>(i) / rate, p, false});
  return out;
}

}  // namespace

TEST(Geometry, RejectsNonPositive) {
  ScreenGeometry g;
  EXPECT_NO_THROW(g.validate());
  g.viewing_distance_mm = 0;
  EXPECT_THROW(g.validate(), Error);
  g = {};
  g.width_px = -1;
  EXPECT_THROW(g.validate(), Error);
}

TEST(AngularOffset, HandTrigExample) {
  const auto g = pitch_quarter();
  const auto c = g.center();
  const double expected = std::atan(25.0 / 700.0) * 180.0 / std::numbers::pi;
  EXPECT_NEAR(angular_offset(c, {c.x + 100, c.y}, g), expected, 1e-12);
  EXPECT_NEAR(expected, 2.0454, 1e-4);
}

TEST(AngularOffset, IdentityAndSymmetry) {
  const auto g = pitch_quarter();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(0, g.width_px), uy(0, g.height_px);
  for (int i = 0; i < 1000; ++i) {
    const ScreenPoint p{ux(rng), uy(rng)}, q{ux(rng), uy(rng)};
    EXPECT_EQ(angular_offset(p, p, g), 0.0);
    EXPECT_EQ(angular_offset(p, q, g), angular_offset(q, p, g));
    EXPECT_GE(angular_offset(p, q, g), 0.0);
  }
}

TEST(AngularOffset, TriangleInequalitySampled) {
  const auto g = pitch_quarter();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(-500, g.width_px + 500), uy(-500, g.height_px + 500);
  for (int i = 0; i < 10000; ++i) {
    const ScreenPoint a{ux(rng), uy(rng)}, b{ux(rng), uy(rng)}, c{ux(rng), uy(rng)};
    EXPECT_LE(angular_offset(a, c, g), angular_offset(a, b, g) + angular_offset(b, c, g) + 1e-12);
  }
}

TEST(AngularOffset, MatchesArccosDefinition) {
  const auto g = pitch_quarter();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(0, g.width_px), uy(0, g.height_px);
  for (int i = 0; i < 1000; ++i) {
    const ScreenPoint p{ux(rng), uy(rng)}, q{ux(rng), uy(rng)};
    const double px = (p.x - 960) * 0.25, py = (p.y - 540) * 0.25;
    const double qx = (q.x - 960) * 0.25, qy = (q.y - 540) * 0.25;
    const double dot = px * qx + py * qy + 700.0 * 700.0;
    const double np = std::sqrt(px * px + py * py + 700.0 * 700.0), nq = std::sqrt(qx * qx + qy * qy + 700.0 * 700.0);
    const double ref = std::acos(std::clamp(dot / (np * nq), -1.0, 1.0)) * 180.0 / std::numbers::pi;
    // arccos loses digits for small angles
    EXPECT_NEAR(angular_offset(p, q, g), ref, 1e-6);
  }
}

TEST(AngularOffset, PointAtAngleRoundTrip) {
  const auto g = pitch_quarter();
  for (double dir : {0.0, 0.7, 2.0, 4.5})
    for (double deg : {0.1, 0.42, 2.0, 10.0}) {
      const ScreenPoint p{300, 800};
      EXPECT_NEAR(angular_offset(p, point_at_angle(p, deg, dir, g), g), deg, 1e-9);
    }
}

TEST(Calibration, AffineImageIsExact) {
  ScreenGeometry g;
  const auto targets = grid9(g);
  std::vector<PupilPoint> pupil;
  for (const auto& t : targets) pupil.push_back({0.2 + 0.3 * t.x / g.width_px + 0.05 * t.y / g.height_px,
                                                 0.7 - 0.02 * t.x / g.width_px - 0.4 * t.y / g.height_px});
  const auto m = fit_calibration(pupil, targets);
  EXPECT_LT(m.residual_rms_px, 1e-9);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    EXPECT_NEAR(m.evaluate(pupil[i]).x, targets[i].x, 1e-8);
    EXPECT_NEAR(m.evaluate(pupil[i]).y, targets[i].y, 1e-8);
  }
}

TEST(Calibration, IdentityReproducesTargets) {
  ScreenGeometry g;
  const auto targets = grid9(g);
  std::vector<PupilPoint> pupil;
  for (const auto& t : targets) pupil.push_back({t.x / g.width_px, t.y / g.height_px});
  const auto m = fit_calibration(pupil, targets);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    const PupilPoint p{u(rng), u(rng)};
    const auto s = map_gaze(m, {0.0, p, 1.0}, g);
    ASSERT_TRUE(s);
    EXPECT_NEAR(s->point.x, p.x * g.width_px, 1e-9);
    EXPECT_NEAR(s->point.y, p.y * g.height_px, 1e-9);
  }
}

TEST(Calibration, QuadraticGroundTruthUnseenPoints) {
  ScreenGeometry g;
  const auto truth = sim::ground_truth_gaze_map(g);
  const auto targets = grid9(g);
  std::vector<PupilPoint> pupil;
  for (const auto& t : targets) pupil.push_back(sim::invert_gaze_map(truth, t));
  const auto m = fit_calibration(pupil, targets);
  EXPECT_LT(m.residual_rms_px, 1e-9);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 200; ++i) {
    const PupilPoint p{u(rng), u(rng)};
    const auto want = truth.evaluate(p);
    const auto got = m.evaluate(p);
    EXPECT_NEAR(got.x, want.x, 1e-6);
    EXPECT_NEAR(got.y, want.y, 1e-6);
  }
}

TEST(Calibration, RandomBasisMapsFitExactly) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 500);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    CalibrationModel truth;
    for (auto& c : truth.coef_x) c = n(rng);
    for (auto& c : truth.coef_y) c = n(rng);
    std::vector<PupilPoint> pupil;
    std::vector<ScreenPoint> targets;
    for (int i = 0; i < 12; ++i) {
      pupil.push_back({u(rng), u(rng)});
      targets.push_back(truth.evaluate(pupil.back()));
    }
    const auto m = fit_calibration(pupil, targets);
    EXPECT_LT(m.residual_rms_px, 1e-9);
  }
}

TEST(Calibration, CollinearTargetsAreRejected) {
  std::vector<PupilPoint> pupil;
  std::vector<ScreenPoint> targets;
  for (int i = 0; i < 9; ++i) {
    pupil.push_back({0.1 * i, 0.1 * i});
    targets.push_back({100.0 * i, 50.0 * i});
  }
  try {
    fit_calibration(pupil, targets);
    FAIL() << "expected conditioning error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numerical);
  }
}

TEST(Calibration, TooFewPairsAndMismatch) {
  std::vector<PupilPoint> pupil(5, {0.5, 0.5});
  std::vector<ScreenPoint> targets(5);
  EXPECT_THROW(fit_calibration(pupil, targets), Error);
  pupil.resize(9);
  EXPECT_THROW(fit_calibration(pupil, targets), Error);
}

TEST(Calibration, JsonRoundTripAndNonFinite) {
  ScreenGeometry g;
  const auto m = sim::ground_truth_gaze_map(g);
  nlohmann::json j = m;
  const auto back = j.get<CalibrationModel>();
  EXPECT_EQ(back.coef_x, m.coef_x);
  EXPECT_EQ(back.coef_y, m.coef_y);
  j["coef_x"][2] = nullptr;
  EXPECT_ANY_THROW(j.get<CalibrationModel>());
}

TEST(MapGaze, ConfidenceGate) {
  ScreenGeometry g;
  const auto m = sim::ground_truth_gaze_map(g);
  EXPECT_FALSE(map_gaze(m, {0.0, {0.5, 0.5}, 0.59}, g, 0.6));
  EXPECT_TRUE(map_gaze(m, {0.0, {0.5, 0.5}, 0.61}, g, 0.6));
  EXPECT_THROW(map_gaze(m, {0.0, {0.5, 0.5}, 1.5}, g), Error);
  EXPECT_THROW(map_gaze(m, {0.0, {0.5, 0.5}, -0.1}, g), Error);
}

TEST(MapGaze, OffScreenIsFlaggedNotClamped) {
  ScreenGeometry g;
  CalibrationModel m;
  m.coef_x = {0, static_cast<double>(g.width_px), 0, 0, 0, 0};
  m.coef_y = {0, 0, static_cast<double>(g.height_px), 0, 0, 0};
  const auto s = map_gaze(m, {1.0, {1.25, -0.1}, 1.0}, g);
  ASSERT_TRUE(s);
  EXPECT_TRUE(s->off_screen);
  EXPECT_DOUBLE_EQ(s->point.x, 1.25 * g.width_px);
  EXPECT_DOUBLE_EQ(s->point.y, -0.1 * g.height_px);
  EXPECT_FALSE(map_gaze(m, {1.0, {0.5, 0.5}, 1.0}, g)->off_screen);
}

TEST(Fixations, ConstantGazeIsOneFixation) {
  ScreenGeometry g;
  const ScreenPoint p{700, 300};
  const auto s = constant_run(p, 2.0, 0.5, 30);
  const auto f = segment_fixations(s, g);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_DOUBLE_EQ(f[0].centroid.x, p.x);
  EXPECT_DOUBLE_EQ(f[0].centroid.y, p.y);
  EXPECT_EQ(f[0].members.size(), s.size());
  EXPECT_DOUBLE_EQ(f[0].start, 2.0);
}

TEST(Fixations, TwoClustersFiveDegreesApart) {
  ScreenGeometry g;
  const auto a = g.center();
  const auto b = point_at_angle(a, 5.0, 0.3, g);
  auto s = constant_run(a, 0.0, 0.3, 60);
  const auto s2 = constant_run(b, 0.3, 0.3, 60);
  s.insert(s.end(), s2.begin(), s2.end());
  const auto f = segment_fixations(s, g);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_NEAR(angular_offset(f[0].centroid, a, g), 0.0, 1e-9);
  EXPECT_NEAR(angular_offset(f[1].centroid, b, g), 0.0, 1e-9);
  EXPECT_LT(f[0].end, f[1].start);
}

TEST(Fixations, SmoothDriftHasNoFixation) {
  ScreenGeometry g;
  const auto start = point_at_angle(g.center(), 8.0, std::numbers::pi, g);
  for (double rate : {30.0, 60.0, 120.0, 250.0}) {
    std::vector<GazeSample> s;
    for (int i = 0; i < static_cast<int>(rate * 1.5); ++i) {
      const double t = i / rate;
      s.push_back({t, point_at_angle(start, 10.0 * t, 0.0, g), false});
    }
    EXPECT_TRUE(segment_fixations(s, g).empty()) << rate;
  }
}

TEST(Fixations, IntervalsDisjointAndWithinDispersion) {
  ScreenGeometry g;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0, 4);
  std::uniform_real_distribution<double> ux(100, 1800), uy(100, 1000);
  std::vector<GazeSample> s;
  double t = 0;
  for (int fix = 0; fix < 40; ++fix) {
    const ScreenPoint c{ux(rng), uy(rng)};
    const int len = 3 + static_cast<int>(rng() % 20);
    for (int i = 0; i < len; ++i, t += 1.0 / 30) s.push_back({t, {c.x + n(rng), c.y + n(rng)}, false});
  }
  const auto f = segment_fixations(s, g);
  ASSERT_FALSE(f.empty());
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_GE(f[i].duration(), 0.1);
    if (i > 0) EXPECT_LT(f[i - 1].end, f[i].start);
    for (auto a : f[i].members)
      for (auto b : f[i].members) EXPECT_LE(angular_offset(s[a].point, s[b].point, g), 1.0);
  }
}

TEST(Accuracy, CentroidsOnTargetsIsZero) {
  ScreenGeometry g;
  const auto t = grid9(g);
  EXPECT_EQ(gaze_accuracy(std::span<const ScreenPoint>(t), std::span<const ScreenPoint>(t), g), 0.0);
}

TEST(Accuracy, ConstantOffsetCase) {
  const auto g = pitch_quarter();
  const auto c = g.center();
  const std::vector<ScreenPoint> targets(4, c);
  const std::vector<ScreenPoint> cents{{c.x + 100, c.y}, {c.x - 100, c.y}, {c.x, c.y + 100}, {c.x, c.y - 100}};
  EXPECT_NEAR(gaze_accuracy(std::span<const ScreenPoint>(cents), std::span<const ScreenPoint>(targets), g), 2.0454,
              1e-4);
}

TEST(Accuracy, MatchingDropsFarFixations) {
  ScreenGeometry g;
  const std::vector<ScreenPoint> targets{{400, 400}, {1500, 700}};
  std::vector<Fixation> fx(3);
  fx[0].centroid = point_at_angle(targets[0], 0.5, 0.0, g);
  fx[1].centroid = point_at_angle(targets[1], 1.0, 1.0, g);
  fx[2].centroid = {960, 100};  // far from both
  const auto m = match_fixations(fx, targets, g);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].target, 0u);
  EXPECT_EQ(m[1].target, 1u);
  EXPECT_NEAR(gaze_accuracy(std::span<const Fixation>(fx), std::span<const ScreenPoint>(targets), g), 0.75, 1e-9);
}

TEST(Accuracy, TranslationCovariantNearCenter) {
  ScreenGeometry g;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-60, 60), off(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScreenPoint> t, c, ts, cs;
    const double sx = u(rng) / 3, sy = u(rng) / 3;
    for (int i = 0; i < 20; ++i) {
      const ScreenPoint p{960 + u(rng), 540 + u(rng)};
      t.push_back(p);
      c.push_back({p.x + off(rng), p.y + off(rng)});
      ts.push_back({t.back().x + sx, t.back().y + sy});
      cs.push_back({c.back().x + sx, c.back().y + sy});
    }
    const double a = gaze_accuracy(std::span<const ScreenPoint>(c), std::span<const ScreenPoint>(t), g);
    const double b = gaze_accuracy(std::span<const ScreenPoint>(cs), std::span<const ScreenPoint>(ts), g);
    EXPECT_NEAR(a, b, 1e-3);
  }
}

TEST(Precision, Examples) {
  const auto g = pitch_quarter();
  const ScreenPoint p{500, 500};
  EXPECT_EQ(gaze_precision({{p, p, p, p}}, g), 0.0);
  const auto q = point_at_angle(p, 1.0, 0.4, g);
  EXPECT_NEAR(gaze_precision({{p, q, p, q, p}, {q, p}}, g), 1.0, 1e-9);
  EXPECT_THROW(gaze_precision({{p}}, g), Error);
}

TEST(Precision, PoolsBySamplePairCount) {
  const auto g = pitch_quarter();
  const ScreenPoint p{960, 540};
  const auto one = point_at_angle(p, 1.0, 0.0, g);
  const auto two = point_at_angle(p, 2.0, 0.0, g);
  // 3 pairs at 1 deg, 1 pair at 2 deg: sqrt((3 + 4) / 4)
  EXPECT_NEAR(gaze_precision({{p, one, p, one}, {p, two}}, g), std::sqrt(7.0 / 4.0), 1e-9);
}

TEST(Precision, GrowsWithSimulatedJitter) {
  sim::SimConfig cfg;
  cfg.seed = 77;
  double last = -1;
  for (double sigma : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    sim::GazeScript script;
    script.targets = sim::scatter_targets(cfg.screen, 20, 5);
    script.jitter_deg = sigma;
    const auto trace = sim::synth_gaze(cfg, script);
    std::vector<std::vector<ScreenPoint>> groups(script.targets.size());
    for (std::size_t i = 0; i < trace.gaze.size(); ++i) groups[trace.target_index[i]].push_back(trace.gaze[i]);
    const double prec = gaze_precision(groups, cfg.screen);
    EXPECT_GT(prec, last) << sigma;
    last = prec;
  }
}

TEST(Objects, ParseBoxMarker) {
  const auto b = parse_box_marker("cup,0.87,0.1,0.2,0.3,0.5");
  EXPECT_EQ(b.label, "cup");
  EXPECT_DOUBLE_EQ(b.confidence, 0.87);
  EXPECT_DOUBLE_EQ(b.y1, 0.5);
  EXPECT_THROW(parse_box_marker("cup,0.87,0.1,0.2,0.3"), Error);
  EXPECT_THROW(parse_box_marker("cup,x,0.1,0.2,0.3,0.5"), Error);
  EXPECT_THROW(parse_box_marker("cup,0.9,0.5,0.2,0.3,0.5"), Error);
  EXPECT_THROW(parse_box_marker(",0.9,0.1,0.2,0.3,0.5"), Error);
}

TEST(Objects, Association) {
  const std::vector<LabeledBox> boxes{{"table", 0.9, 0.0, 0.0, 1.0, 1.0}, {"cup", 0.8, 0.4, 0.4, 0.6, 0.6},
                                      {"book", 0.7, 0.7, 0.1, 0.9, 0.3}};
  EXPECT_EQ(associate_gaze_object(0.8, 0.2, boxes), "book");
  EXPECT_EQ(associate_gaze_object(0.5, 0.5, boxes), "cup");
  EXPECT_EQ(associate_gaze_object(0.2, 0.8, boxes), "table");
  EXPECT_FALSE(associate_gaze_object(1.5, 0.5, boxes));
  const std::vector<LabeledBox> single{{"pen", 0.5, 0.1, 0.1, 0.2, 0.2}};
  EXPECT_EQ(associate_gaze_object(0.15, 0.15, single), "pen");
  EXPECT_FALSE(associate_gaze_object(0.5, 0.5, single));
}

TEST(Objects, SmallestAreaOracle) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LabeledBox> boxes;
    for (int i = 0; i < 6; ++i) {
      double x0 = u(rng), x1 = u(rng), y0 = u(rng), y1 = u(rng);
      if (x1 < x0) std::swap(x0, x1);
      if (y1 < y0) std::swap(y0, y1);
      boxes.push_back({"b" + std::to_string(i), 1.0, x0, y0, x1, y1});
    }
    const double x = u(rng), y = u(rng);
    std::optional<std::string> want;
    double best = 2.0;
    for (const auto& b : boxes)
      if (x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1 && b.area() < best) best = b.area(), want = b.label;
    EXPECT_EQ(associate_gaze_object(x, y, boxes), want);
  }
}
