// Acceptance run: one PASS/FAIL line per core criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <complex>
#include <fstream>
#include <numbers>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include <Eigen/SVD>

#include "biostream/app/commands.hpp"
#include "biostream/dsp/pipeline.hpp"
#include "biostream/eval/scenarios.hpp"
#include "biostream/eval/stats.hpp"
#include "biostream/ica/ica.hpp"
#include "biostream/sim/cardiac.hpp"
#include "biostream/sim/eeg.hpp"
#include "biostream/sim/link.hpp"
#include "biostream/stream/clock.hpp"
#include "biostream/stream/session.hpp"
#include "biostream/stream/wire.hpp"

using namespace biostream;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ----------------------------------------------------------------------------

void filter(Outcome& o) {
  const auto t0 = Clock::now();
  const auto c = dsp::design_bandpass(0.8, 4.0, 3, 100.0);
  // direct evaluation of prod H_k(e^jw) from the section coefficients
  const auto mag = [&](double f) {
    const std::complex<double> z = std::polar(1.0, -2.0 * std::numbers::pi * f / 100.0);
    std::complex<double> h = 1.0;
    for (const auto& s : c.sections)
      h *= (s.b0 + s.b1 * z + s.b2 * z * z) / (1.0 + s.a1 * z + s.a2 * z * z);
    return std::abs(h);
  };
  const auto db = [&](double f) { return 20.0 * std::log10(mag(f)); };
  o.detail << "H(0.8)=" << db(0.8) << " dB, H(4)=" << db(4.0) << " dB, |H(0)|=" << mag(0.0)
           << ", H(20)=" << db(20.0) << " dB";
  o.require(std::abs(db(0.8) + 3.0103) <= 0.5, "-3 dB at 0.8 Hz");
  o.require(std::abs(db(4.0) + 3.0103) <= 0.5, "-3 dB at 4 Hz");
  o.require(mag(0.0) < 1e-6, "DC rejection");
  o.require(db(20.0) <= -18.0, "20 Hz attenuation");
  o.require(std::abs(mag(2.0) - c.magnitude(2.0)) < 1e-12, "library magnitude agrees");
  o.require(seconds_since(t0) < 1.0, "runtime");
}

void anc(Outcome& o) {
  const auto t0 = Clock::now();
  const auto rest_on = eval::run_ppg_scenario(eval::default_ppg_scenario(sim::Activity::rest, true, 1));
  const auto rest_off = eval::run_ppg_scenario(eval::default_ppg_scenario(sim::Activity::rest, false, 1));
  const auto walk_on = eval::run_ppg_scenario(eval::default_ppg_scenario(sim::Activity::walk, true, 1));
  const auto walk_off = eval::run_ppg_scenario(eval::default_ppg_scenario(sim::Activity::walk, false, 1));
  const double secs = seconds_since(t0);
  o.detail << "rest |err| on/off " << rest_on.mean_abs_error_bpm << "/" << rest_off.mean_abs_error_bpm
           << " BPM; walk SNR " << walk_on.artifact_snr_db << " dB, |norm err| on/off "
           << walk_on.mean_abs_normalized_error_pct << "/" << walk_off.mean_abs_normalized_error_pct
           << " %, within 3 BPM " << 100.0 * walk_on.fraction_within_3bpm_of_truth << " %; " << secs << " s";
  o.require(rest_on.mean_abs_error_bpm < 2.0 && rest_off.mean_abs_error_bpm < 2.0, "rest error < 2 BPM");
  o.require(std::abs(rest_on.mean_abs_error_bpm - rest_off.mean_abs_error_bpm) < 0.5, "rest on/off differ < 0.5");
  o.require(std::abs(walk_on.artifact_snr_db) <= 1.0, "walk at 0 dB SNR");
  o.require(walk_on.mean_abs_normalized_error_pct <= 0.5 * walk_off.mean_abs_normalized_error_pct, "ANC halves error");
  o.require(walk_on.fraction_within_3bpm_of_truth >= 0.9, ">= 90% windows within 3 BPM");
  o.require(secs < 30.0, "runtime");
}

void peaks(Outcome& o) {
  double worst = 0.0;
  std::size_t missing = 0;
  for (double bpm = 40; bpm <= 180; bpm += 5) {
    sim::SimConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(bpm);
    cfg.hr_start_bpm = cfg.hr_end_bpm = bpm;
    const auto ecg = sim::synth_ecg(cfg, 60.0);
    const auto r = dsp::run_ecg_chain(ecg.samples, ecg.rate_hz, {});
    for (const auto& v : r.hr_bpm) {
      if (!v) ++missing;
      else worst = std::max(worst, std::abs(*v - bpm));
    }
  }
  sim::SimConfig cfg;
  cfg.seed = 31;
  cfg.hr_start_bpm = cfg.hr_end_bpm = 60;
  cfg.rr_jitter_ms = 50;
  const auto ecg = sim::synth_ecg(cfg, 300.0);
  const auto r = dsp::run_ecg_chain(ecg.samples, ecg.rate_hz, {});
  const auto h = dsp::hrv_metrics(r.peaks, ecg.rate_hz);
  // i.i.d. RR jitter: successive differences have sd sqrt(2) sigma
  const double sigma_hat = h.rmssd_ms / std::sqrt(2.0);
  o.detail << "worst window HR error " << worst << " BPM over 40-180 BPM; RMSSD/sqrt2 " << sigma_hat
           << " ms, SDNN " << h.sdnn_ms << " ms for sigma 50 ms";
  o.require(missing == 0, "every window has an HR");
  o.require(worst < 1.0, "HR error < 1 BPM");
  o.require(std::abs(sigma_hat - 50.0) <= 10.0, "RMSSD recovers sigma within 20%");
}

void clock_sync(Outcome& o) {
  sim::LinkModel link;
  link.clock_offset_s = 0.010;
  link.jitter_s = 0.005;
  link.seed = 1;
  const auto r = sim::simulate_link({{0.0, stream::wire::Bye{}}}, link);
  const auto est = stream::estimate_clock_offset(r.bursts.at(0));
  const double err = std::abs(est.offset_s - 0.010);

  int within = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    link.seed = seed;
    const auto b = sim::simulate_link({{0.0, stream::wire::Bye{}}}, link).bursts.at(0);
    within += std::abs(stream::estimate_clock_offset(b).offset_s - 0.010) <= 0.001;
    ++total;
  }

  // role swap on a 2^-20 s lattice: exact negation
  std::mt19937_64 rng(3);
  const auto tick = [](long n) { return std::ldexp(static_cast<double>(n), -20); };
  std::uniform_int_distribution<long> ticks(0, 5243);
  bool antisymmetric = true;
  for (int trial = 0; trial < 100; ++trial) {
    const double offset = tick(10486L * (trial + 1));
    std::vector<stream::ClockExchange> ab, ba;
    for (int i = 0; i < 10; ++i) {
      const double up = tick(ticks(rng)), down = tick(ticks(rng)), turn = tick(ticks(rng)), s0 = tick(10486L * i);
      ab.push_back({s0, s0 + up + offset, s0 + up + offset + turn, s0 + up + down + turn});
      const double q0 = s0 + offset;
      ba.push_back({q0, q0 + down - offset, q0 + down - offset + turn, q0 + up + down + turn});
    }
    antisymmetric &= stream::estimate_clock_offset(ab).offset_s == -stream::estimate_clock_offset(ba).offset_s;
  }
  o.detail << "seeded burst error " << err * 1e3 << " ms; within 1 ms on " << within << "/" << total
           << " seeds; antisymmetry " << (antisymmetric ? "exact" : "broken");
  o.require(err <= 0.001, "seeded burst within 1 ms");
  o.require(within >= 0.85 * total, "within 1 ms on >= 85% of seeds");
  o.require(antisymmetric, "antisymmetry");
}

void ica_check(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0, worst_cond = 0.0, worst_recon = 0.0;
  bool decreased = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    sim::SimConfig cfg;
    cfg.seed = seed;
    const auto mix = sim::synth_eeg_mixture(cfg, 30.0, 4);
    const Eigen::JacobiSVD<ica::Matrix> svd(mix.mixing);
    const auto sv = svd.singularValues();
    worst_cond = std::max(worst_cond, sv(0) / sv(sv.size() - 1));
    const auto& x = mix.channels;
    auto state = ica::ica_init(x.topRows(1280));
    const double initial = ica::amari_index(state.separating() * mix.mixing);
    for (Eigen::Index r = 0; r < x.rows(); r += 640) ica::ica_update(state, x.middleRows(r, std::min<Eigen::Index>(640, x.rows() - r)));
    const double final_index = ica::amari_index(state.separating() * mix.mixing);
    worst = std::max(worst, final_index);
    decreased &= final_index < initial;
    worst_recon = std::max(worst_recon, (ica::reconstruct_excluding(state, x, {}) - x).cwiseAbs().maxCoeff());
  }
  // permutation / power-of-two scaling invariance
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> e(-8, 8);
  bool invariant = true;
  for (int trial = 0; trial < 200; ++trial) {
    const ica::Matrix p = ica::Matrix::Random(4, 4);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 4, rng);
    Eigen::VectorXd scale(4);
    for (int k = 0; k < 4; ++k) scale(k) = std::ldexp(rng() & 1 ? 1.0 : -1.0, e(rng));
    invariant &= ica::amari_index(perm * p) == ica::amari_index(p);
    invariant &= ica::amari_index(scale.asDiagonal() * p) == ica::amari_index(p);
  }
  const double secs = seconds_since(t0);
  o.detail << "worst Amari " << worst << " over 5 seeds (cond <= " << worst_cond << "), reconstruct(none) error "
           << worst_recon << ", invariance " << (invariant ? "exact" : "broken") << "; " << secs << " s";
  o.require(worst_cond < 10.0, "mixing condition < 10");
  o.require(worst < 0.15, "Amari < 0.15");
  o.require(decreased, "Amari below initial");
  o.require(worst_recon <= 1e-9, "identity reconstruction");
  o.require(invariant, "Amari invariance");
  o.require(secs < 20.0, "runtime");
}

void gaze_check(Outcome& o) {
  eval::GazeScenarioOptions clean;
  clean.base_jitter_deg = 0;
  clean.drift_deg = 0;
  clean.precision_bump_deg = 0;
  const auto c = eval::run_gaze_scenario(clean);
  double worst_clean = 0.0;
  for (const auto& t : c.trials) worst_clean = std::max({worst_clean, t.pre_accuracy_deg, t.post_accuracy_deg});

  eval::GazeScenarioOptions noisy;
  const auto r = eval::run_gaze_scenario(noisy);
  o.detail << "noise-free accuracy " << worst_clean << " deg on " << c.trials.front().pre_fixations
           << " unseen targets; drift delta " << r.accuracy_delta_deg() << " deg, precision delta "
           << r.precision_delta_deg() << " deg over " << r.trials.size() << " trials";
  o.require(worst_clean < 0.05, "noise-free accuracy < 0.05 deg");
  o.require(std::abs(r.accuracy_delta_deg() - 0.42) <= 0.1, "drift recovered");
  o.require(std::abs(r.precision_delta_deg() - 0.2) <= 0.05, "jitter bump recovered");
  o.require(r.trials.size() == 3, "three trials");
}

void eval_math(Outcome& o) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> hr(40, 180);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = hr(rng), b[i] = hr(rng);
    long double sum = 0, mean_a = 0;
    for (std::size_t i = 0; i < n; ++i) sum += static_cast<long double>(a[i]) - b[i], mean_a += a[i];
    const long double bias = sum / n;
    mean_a /= n;
    long double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long double d = static_cast<long double>(a[i]) - b[i] - bias;
      ss += d * d;
    }
    const auto sd = static_cast<double>(std::sqrt(ss / (n - 1)));
    const auto ba = eval::bland_altman(a, b);
    worst = std::max({worst, std::abs(ba.bias - static_cast<double>(bias)), std::abs(ba.sd - sd),
                      std::abs(ba.loa_low - (static_cast<double>(bias) - 1.96 * sd)),
                      std::abs(ba.loa_high - (static_cast<double>(bias) + 1.96 * sd))});
    const auto ne = eval::normalized_error(a, b);
    for (std::size_t i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(ne[i] - static_cast<double>(100.0L * (static_cast<long double>(a[i]) - b[i]) / mean_a)));
  }
  bool perfect_zero = true;
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<double> a(1 + rng() % 30);
    for (auto& v : a) v = hr(rng);
    for (double e : eval::normalized_error(a, a)) perfect_zero &= e == 0.0;
  }
  o.detail << "worst deviation from brute force " << worst << "; perfect estimate gives "
           << (perfect_zero ? "exactly 0%" : "nonzero error");
  o.require(worst <= 1e-9, "oracle agreement to 1e-9");
  o.require(perfect_zero, "perfect estimation is 0%");
}


stream::wire::Message random_message(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> type(0, 5);
  const auto any_double = [&] {
    const std::uint64_t bits = rng();
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  };
  const auto any_float = [&] {
    const auto bits = static_cast<std::uint32_t>(rng());
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  };
  const auto any_text = [&](std::size_t max_len) {
    std::string s(rng() % (max_len + 1), '\0');
    for (auto& ch : s) ch = static_cast<char>(rng() & 0xFF);
    return s;
  };
  switch (type(rng)) {
    case 0: return stream::wire::Hello{any_text(200)};
    case 1: {
      stream::wire::ChunkFrame f;
      f.stream_id = static_cast<stream::StreamId>(rng());
      f.n_channels = static_cast<std::uint16_t>(rng() % 17);
      const auto n = rng() % 41;
      for (std::size_t i = 0; i < n; ++i) f.timestamps.push_back(any_double());
      for (std::size_t i = 0; i < n * f.n_channels; ++i) f.samples.push_back(any_float());
      return f;
    }
    case 2: return stream::wire::ClockPing{any_double()};
    case 3: return stream::wire::ClockPong{any_double(), any_double(), any_double()};
    case 4: return stream::wire::MarkerFrame{static_cast<stream::StreamId>(rng()), any_double(), any_text(300)};
    default: return stream::wire::Bye{};
  }
}

void transport(Outcome& o) {
  std::mt19937_64 rng(42);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto bytes = stream::wire::encode(random_message(rng));
    mismatches += stream::wire::encode(stream::wire::decode(bytes)) != bytes;
  }

  const auto dir = fs::temp_directory_path() / ("biostream_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const nlohmann::json cfg{
      {"version", 1},
      {"seed", 11},
      {"duration_s", 20},
      {"sources",
       {{{"type", "sim"},
         {"activity", "walk"},
         {"streams", {{{"source_id", "ppg"}, {"kind", "PPG"}}, {{"source_id", "acc"}, {"kind", "ACC"}},
                      {{"source_id", "ecg"}, {"kind", "ECG"}}, {{"source_id", "eeg"}, {"kind", "EEG"}}}}}}}};
  std::ofstream(dir / "session.json") << cfg.dump();
  std::ostringstream log;
  app::CommandOptions rec;
  rec.log = &log;
  rec.speed = 0.0;
  rec.config = dir / "session.json";
  rec.out = dir / "a.mbr";
  app::cmd_record(rec);
  app::CommandOptions rep;
  rep.log = &log;
  rep.speed = 0.0;
  rep.input = dir / "a.mbr";
  rep.out = dir / "b.mbr";
  app::cmd_replay(rep);
  const auto a = stream::load_recording(dir / "a.mbr");
  const auto b = stream::load_recording(dir / "b.mbr");
  bool identical = a.streams.size() == b.streams.size() && !a.streams.empty();
  for (std::size_t i = 0; identical && i < a.streams.size(); ++i)
    identical = a.streams[i].info == b.streams[i].info && a.streams[i].chunks == b.streams[i].chunks;
  fs::remove_all(dir);

  stream::Session s;
  stream::StreamInfo info;
  info.name = info.source_id = "ppg";
  info.kind = stream::StreamKind::PPG;
  info.channel_count = 1;
  info.nominal_rate_hz = 100;
  info.channel_labels = {"PPG"};
  const auto id = s.register_stream(info);
  stream::Chunk bad;
  bad.stream_id = id;
  bad.channel_count = 1;
  bad.timestamps = {1.0, 0.9};
  bad.samples = {0.f, 1.f};
  bool rejected = false;
  try {
    s.push_chunk(id, bad);
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::rejected_chunk;
  }
  o.detail << mismatches << "/10000 fuzz frames differ; record->replay of " << a.streams.size() << " streams "
           << (identical ? "content-identical" : "differs") << "; non-monotone chunk "
           << (rejected ? "rejected" : "accepted");
  o.require(mismatches == 0, "fuzz round trip");
  o.require(identical, "record->replay");
  o.require(rejected, "non-monotone rejection");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"filter design", filter},   {"ANC rest/walk", anc}, {"peak detection / HR / HRV", peaks},
      {"clock sync", clock_sync},  {"ICA", ica_check},     {"gaze calibration", gaze_check},
      {"evaluation math", eval_math}, {"transport", transport},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail.str() << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
