#pragma once

// The five operator commands. Each validates its inputs completely before
// creating files, sockets or threads.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "biostream/app/bridge.hpp"
#include "biostream/app/config.hpp"
#include "biostream/app/graph.hpp"
#include "biostream/app/runtime.hpp"
#include "biostream/eval/report.hpp"
#include "biostream/eval/scenarios.hpp"
#include "biostream/stream/net.hpp"

namespace biostream::app {

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> input;  // recording for replay / process / serve
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  double speed = 1.0;
  std::optional<unsigned short> port;
  bool plot = false;

  // evaluate
  std::string target;    // ppg | gaze
  std::string scenario;  // rest | walk | both
  std::string anc = "both";
  std::size_t trials = 3;
  double duration_s = 120.0;

  /// Raised externally (Ctrl-C) or by the bridge's stop command.
  std::atomic<bool>* stop = nullptr;
  /// replay: seconds to wait for a first TCP subscriber before starting.
  double wait_for_client_s = 10.0;
  /// serve: called once the bridge listens.
  std::function<void(unsigned short)> on_listening;
  std::ostream* log = &std::cout;
};

namespace detail {

inline std::atomic<bool>& stop_flag(CommandOptions& o, std::atomic<bool>& fallback) {
  return o.stop ? *o.stop : fallback;
}

inline SessionConfig require_config(const CommandOptions& o) {
  if (!o.config) throw config_error("this command needs --config");
  auto cfg = load_config(*o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  return cfg;
}

inline void ensure_parent(const std::filesystem::path& file) {
  const auto dir = file.parent_path();
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory '" + dir.string() + "': " + ec.message());
}

}  // namespace detail

// ------------------------------------------------------------ record

/// Subscribes to every configured source, moves timestamps onto the session
/// clock and writes all frames in arrival order. Returns the output path.
inline std::filesystem::path cmd_record(CommandOptions o) {
  auto cfg = detail::require_config(o);
  if (cfg.sources.empty()) throw config_error("config declares no sources to record");
  validate_graph(cfg.processing, cfg.declared_streams());
  const auto out = o.out.value_or(cfg.output.recording_path());
  detail::ensure_parent(out);

  std::atomic<bool> local_stop{false};
  auto& stop = detail::stop_flag(o, local_stop);
  LiveSession live(std::make_shared<SessionClock>(o.speed));
  auto sink = std::make_shared<RecorderSink>(out);
  live.add_sink([sink](const stream::wire::Message& m) { (*sink)(m); });
  try {
    run_sources(live, cfg, stop);
  } catch (...) {
    sink->close();
    throw;
  }
  sink->close();
  *o.log << "recorded " << live.session().streams().size() << " streams to " << out.string()
         << (stop.load() ? " (interrupted)" : "") << '\n';
  return out;
}

// ------------------------------------------------------------ replay

/// Re-publishes a recording into a live session: on a TCP outlet when a port
/// is given, into a new recording when --out is given.
inline void cmd_replay(CommandOptions o) {
  if (!o.input) throw config_error("replay needs an input recording");
  const auto plan = load_replay(*o.input);
  if (o.out) detail::ensure_parent(*o.out);

  std::atomic<bool> local_stop{false};
  auto& stop = detail::stop_flag(o, local_stop);
  auto clock = std::make_shared<SessionClock>(o.speed, plan.first_time);
  LiveSession live(clock);
  std::shared_ptr<RecorderSink> sink;
  if (o.out) {
    sink = std::make_shared<RecorderSink>(*o.out);
    live.add_sink([sink](const stream::wire::Message& m) { (*sink)(m); });
  }
  const auto ids = register_replay(live, plan);
  std::unique_ptr<stream::net::TcpOutlet> outlet;
  if (o.port) {
    outlet = std::make_unique<stream::net::TcpOutlet>(live.session().streams(), *o.port,
                                                      [clock] { return clock->now(); });
    *o.log << "replay outlet on port " << outlet->port() << std::endl;
    outlet->wait_for_clients(1, std::chrono::milliseconds(static_cast<long>(o.wait_for_client_s * 1000)));
    live.add_sink([&outlet](const stream::wire::Message& m) { outlet->publish(m); });
  }
  clock->restart();
  const auto t0 = std::chrono::steady_clock::now();
  play_replay(live, plan, ids, &stop);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (outlet) outlet->close();
  if (sink) sink->close();
  *o.log << "replayed " << plan.data.size() << " frames in " << wall << " s"
         << (plan.truncated ? " (recording ends in a truncated frame)" : "") << '\n';
}

// ------------------------------------------------------------ process

inline std::filesystem::path summary_path(const std::filesystem::path& out) {
  auto p = out;
  p.replace_extension(".summary.json");
  return p;
}

/// Runs the stage graph over a recording (or a live acquisition of the
/// configured sources) and writes input plus derived streams to --out, with
/// a JSON summary alongside.
inline std::filesystem::path cmd_process(CommandOptions o) {
  auto cfg = detail::require_config(o);
  if (cfg.processing.empty()) throw config_error("config has no processing stages");
  stream::RecordedSession input;
  if (o.input) {
    input = stream::load_recording(*o.input);
    auto available = cfg.declared_streams();
    for (const auto& s : input.streams) available.push_back(s.info.source_id);
    validate_graph(cfg.processing, available);
  } else {
    if (cfg.sources.empty()) throw config_error("process needs an input recording or configured sources");
    validate_graph(cfg.processing, cfg.declared_streams());
  }
  const auto out = o.out.value_or(cfg.output.dir / "processed.mbr");
  detail::ensure_parent(out);

  if (!o.input) {
    std::atomic<bool> local_stop{false};
    auto& stop = detail::stop_flag(o, local_stop);
    LiveSession live(std::make_shared<SessionClock>(o.speed));
    std::mutex mu;
    live.add_sink([&](const stream::wire::Message& m) {
      std::lock_guard lock(mu);
      input.apply(m);
    });
    run_sources(live, cfg, stop);
  }
  const auto result = run_graph(input, cfg.processing, cfg.montage);
  stream::RecordedSession output = input;
  for (const auto& sig : result.outputs) output.streams.push_back(to_stream_data(sig));
  stream::write_recording(out, output);
  eval::write_text_file(summary_path(out), result.summary.dump(2) + "\n");
  *o.log << "processed " << cfg.processing.size() << " stages into " << out.string() << '\n';
  return out;
}

// ------------------------------------------------------------ evaluate

inline void cmd_evaluate(CommandOptions o) {
  const auto dir = o.out.value_or(std::filesystem::path("."));
  const std::uint64_t seed = o.seed.value_or(1);
  if (o.target == "ppg") {
    if (o.scenario.empty()) throw config_error("evaluate ppg needs --scenario rest|walk|both");
    std::vector<sim::Activity> acts;
    if (o.scenario == "rest" || o.scenario == "both") acts.push_back(sim::Activity::rest);
    if (o.scenario == "walk" || o.scenario == "both") acts.push_back(sim::Activity::walk);
    if (acts.empty()) throw config_error("unknown scenario '" + o.scenario + "' (rest, walk or both)");
    std::vector<bool> ancs;
    if (o.anc == "off" || o.anc == "both") ancs.push_back(false);
    if (o.anc == "on" || o.anc == "both") ancs.push_back(true);
    if (ancs.empty()) throw config_error("--anc must be on, off or both");
    if (!(o.duration_s > 0)) throw config_error("duration must be positive");
    detail::ensure_dir(dir);
    std::vector<eval::PpgScenarioReport> reports;
    for (auto a : acts)
      for (bool anc : ancs) {
        auto opt = eval::default_ppg_scenario(a, anc, seed);
        opt.duration_s = o.duration_s;
        reports.push_back(eval::run_ppg_scenario(opt));
        const auto& r = reports.back();
        *o.log << "ppg " << r.scenario << (r.anc ? " anc " : " no-anc ") << "mean |HR error| "
               << r.mean_abs_error_bpm << " BPM, mean |normalized error| " << r.mean_abs_normalized_error_pct << " %\n";
      }
    eval::write_ppg_report(reports, dir, o.plot);
  } else if (o.target == "gaze") {
    if (o.trials == 0) throw config_error("--trials must be positive");
    detail::ensure_dir(dir);
    eval::GazeScenarioOptions g;
    g.trials = o.trials;
    g.seed = seed;
    const auto r = eval::run_gaze_scenario(g);
    eval::write_gaze_report(r, dir, o.plot);
    *o.log << "gaze accuracy " << r.mean_pre_accuracy_deg << " -> " << r.mean_post_accuracy_deg
           << " deg, precision " << r.mean_pre_precision_deg << " -> " << r.mean_post_precision_deg << " deg\n";
  } else {
    throw config_error("evaluate needs a target: ppg or gaze");
  }
}

// ------------------------------------------------------------ serve

/// Runs the sources (or replays --input) into a live session with the
/// dashboard bridge attached, until stopped by the bridge or externally.
inline void cmd_serve(CommandOptions o) {
  std::optional<SessionConfig> cfg;
  if (o.config) cfg = detail::require_config(o);
  if (!cfg && !o.input) throw config_error("serve needs --config or an input recording");
  std::optional<ReplayPlan> plan;
  if (o.input) plan = load_replay(*o.input);
  if (cfg) {
    auto available = cfg->declared_streams();
    if (plan)
      for (const auto& s : plan->streams) available.push_back(s.source_id);
    validate_graph(cfg->processing, available);
  }
  if (o.out) detail::ensure_parent(*o.out);

  BridgeOptions bo = cfg ? bridge_options(*cfg) : BridgeOptions{};
  if (!cfg) bo.port = 8765;
  if (o.port) bo.port = *o.port;

  std::atomic<bool> local_stop{false};
  auto& stop = detail::stop_flag(o, local_stop);
  LiveSession live(std::make_shared<SessionClock>(o.speed, plan ? plan->first_time : 0.0));
  std::shared_ptr<RecorderSink> sink;
  if (o.out) {
    sink = std::make_shared<RecorderSink>(*o.out);
    live.add_sink([sink](const stream::wire::Message& m) { (*sink)(m); });
  }
  Bridge bridge(live, bo);
  bridge.on_stop([&stop] { stop = true; });
  *o.log << "dashboard bridge listening on ws://127.0.0.1:" << bridge.port() << std::endl;
  if (o.on_listening) o.on_listening(bridge.port());

  std::exception_ptr err;
  std::thread sources([&] {
    try {
      if (plan) {
        const auto ids = register_replay(live, *plan);
        play_replay(live, *plan, ids, &stop);
      }
      if (cfg && !cfg->sources.empty()) run_sources(live, *cfg, stop);
    } catch (...) {
      err = std::current_exception();
      stop = true;
    }
  });
  while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  sources.join();
  bridge.close();
  if (sink) sink->close();
  if (err) std::rethrow_exception(err);
}

}  // namespace biostream::app
