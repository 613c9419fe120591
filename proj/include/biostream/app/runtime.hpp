#pragma once

// Live session plumbing shared by record, replay, process and serve: a
// session clock, a registry that mirrors every frame into a sink (the
// recorder), and the source drivers.

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "biostream/app/config.hpp"
#include "biostream/sim/sensors.hpp"
#include "biostream/stream/clock.hpp"
#include "biostream/stream/net.hpp"
#include "biostream/stream/recording.hpp"
#include "biostream/stream/session.hpp"

namespace biostream::app {

/// Session time in seconds. With speed > 0 it advances at `speed` times wall
/// time from `t0`; with speed 0 (as fast as possible) it is the latest data
/// timestamp seen.
class SessionClock {
 public:
  explicit SessionClock(double speed = 1.0, double t0 = 0.0) : wall0_(stream::local_clock()), speed_(speed), t0_(t0) {
    if (!(speed >= 0.0)) throw config_error("speed must be non-negative");
    latest_.store(t0);
  }

  double now() const { return speed_ > 0 ? t0_ + (stream::local_clock() - wall0_.load()) * speed_ : latest_.load(); }
  /// Session time restarts from t0 now.
  void restart() { wall0_ = stream::local_clock(); }
  double speed() const { return speed_; }
  /// Session time of a local-clock reading, at unit rate (networked devices
  /// run in real time whatever the speed).
  double from_local(double local_s) const { return t0_ + (local_s - wall0_.load()); }

  void observe(double t) {
    double cur = latest_.load();
    while (t > cur && !latest_.compare_exchange_weak(cur, t)) {
    }
  }

  /// Sleeps until session time `t`; returns false if `stop` was raised first.
  bool wait_until(double t, const std::atomic<bool>* stop) const {
    if (speed_ <= 0) return !(stop && stop->load());
    while (true) {
      if (stop && stop->load()) return false;
      const double wait = (t - now()) / speed_;
      if (wait <= 0) return true;
      std::this_thread::sleep_for(std::chrono::duration<double>(std::min(wait, 0.05)));
    }
  }

 private:
  std::atomic<double> wall0_;
  double speed_;
  double t0_;
  std::atomic<double> latest_{0.0};
};

/// Registry plus frame sink. Every registration and data frame is pushed to
/// subscribers of the session and handed to the sink, in one order.
class LiveSession {
 public:
  using Sink = std::function<void(const stream::wire::Message&)>;

  explicit LiveSession(std::shared_ptr<SessionClock> clock) : clock_(std::move(clock)) {}

  void add_sink(Sink s) {
    std::lock_guard lock(mu_);
    sinks_.push_back(std::move(s));
  }

  stream::Session& session() { return session_; }
  SessionClock& clock() { return *clock_; }
  std::shared_ptr<SessionClock> clock_ptr() { return clock_; }

  stream::StreamId add_stream(stream::StreamInfo info) {
    std::lock_guard lock(mu_);
    const auto id = session_.register_stream(info);
    info.stream_id = id;
    emit(stream::wire::Hello::from(info));
    return id;
  }

  /// Data frame whose stream id is already a session id.
  void publish(const stream::wire::Message& m) {
    std::lock_guard lock(mu_);
    if (const auto* c = std::get_if<stream::wire::ChunkFrame>(&m)) {
      session_.push_chunk(c->stream_id, stream::wire::to_chunk(*c));
      if (!c->timestamps.empty()) clock_->observe(c->timestamps.back());
    } else if (const auto* mk = std::get_if<stream::wire::MarkerFrame>(&m)) {
      stream::Chunk ch;
      ch.markers.push_back({mk->timestamp, mk->text});
      session_.push_chunk(mk->stream_id, std::move(ch));
    } else {
      return;
    }
    emit(m);
  }

  /// Marker stamped with the current session time.
  double push_marker(stream::StreamId id, const std::string& text) {
    std::lock_guard lock(mu_);
    const double t = clock_->now();
    stream::Chunk ch;
    ch.markers.push_back({t, text});
    session_.push_chunk(id, std::move(ch));
    emit(stream::wire::MarkerFrame{id, t, text});
    return t;
  }

 private:
  void emit(const stream::wire::Message& m) {
    for (auto& s : sinks_) s(m);
  }

  std::shared_ptr<SessionClock> clock_;
  stream::Session session_;
  std::mutex mu_;  // keeps session order and sink order identical
  std::vector<Sink> sinks_;
};

/// Recorder sink: whole frames, flushed as they arrive.
class RecorderSink {
 public:
  explicit RecorderSink(const std::filesystem::path& path) : writer_(path) {}

  void operator()(const stream::wire::Message& m) {
    std::lock_guard lock(mu_);
    if (closed_) return;
    writer_.write(m);
  }

  void close() {
    std::lock_guard lock(mu_);
    if (closed_) return;
    closed_ = true;
    writer_.close();
  }

 private:
  std::mutex mu_;
  stream::RecordingWriter writer_;
  bool closed_ = false;
};

// ------------------------------------------------------------ simulated devices

struct SimDelivery {
  double arrival_s = 0.0;  // session time
  std::size_t source = 0;
  stream::wire::Message message;  // device stream id, local timestamps
};

/// Every frame of the simulated sources carried over their links, with
/// timestamps moved onto the session clock from the ping-burst estimates.
/// Sorted by arrival; ties keep source order.
inline std::vector<SimDelivery> simulate_sources(const std::vector<const sim::SimSource*>& sources,
                                                 std::vector<std::vector<stream::StreamInfo>>& infos) {
  std::vector<SimDelivery> all;
  infos.clear();
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const auto& src = *sources[k];
    auto render = sim::render_sim_source(src);
    infos.push_back(render.streams);
    std::vector<sim::TimedMessage> data;
    for (auto& f : render.frames)
      if (!std::holds_alternative<stream::wire::Hello>(f.message)) data.push_back(std::move(f));
    if (data.empty()) continue;
    const double start_local = src.link.local_from_remote(data.front().time_s);
    const auto link = sim::simulate_link(data, src.link, start_local);
    stream::OffsetTrack track;
    for (const auto& b : link.bursts)
      if (!b.empty()) track.add(b.front().t0, stream::estimate_clock_offset(b));
    for (auto& d : link.delivered) {
      auto m = d.message;
      stream::wire::shift_timestamps(m, -track.offset_at(d.arrival_local_s));
      all.push_back({d.arrival_local_s, k, std::move(m)});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.arrival_s < b.arrival_s; });
  return all;
}

/// Drives all simulated sources of a config on one thread of control.
inline void run_sim_sources(LiveSession& live, const SessionConfig& cfg, const std::atomic<bool>* stop) {
  std::vector<const sim::SimSource*> srcs;
  for (const auto& s : cfg.sources)
    if (s.type == SourceType::sim) srcs.push_back(&s.sim);
  if (srcs.empty()) return;
  std::vector<std::vector<stream::StreamInfo>> infos;
  const auto deliveries = simulate_sources(srcs, infos);
  std::vector<std::vector<stream::StreamId>> ids(infos.size());
  for (std::size_t k = 0; k < infos.size(); ++k)
    for (const auto& info : infos[k]) ids[k].push_back(live.add_stream(info));
  for (const auto& d : deliveries) {
    if (!live.clock().wait_until(d.arrival_s, stop)) return;
    auto m = d.message;
    if (auto id = stream::wire::stream_id_of(m)) stream::wire::set_stream_id(m, ids[d.source].at(*id));
    live.publish(m);
  }
}

// ------------------------------------------------------------ networked devices

/// Subscribes to one TCP outlet until BYE, disconnect, stop or the session
/// duration (0 = unbounded) runs out. Timestamps arrive on the local clock
/// and are moved onto the session clock.
inline void run_tcp_source(LiveSession& live, const TcpSourceConfig& cfg, double duration_s,
                           const std::atomic<bool>* stop, stream::net::InletOptions options = {}) {
  stream::net::TcpInlet inlet(cfg.host, cfg.port, options);
  std::map<stream::StreamId, stream::StreamId> ids;
  const double base = live.clock().from_local(0.0);
  while (!(stop && stop->load())) {
    if (duration_s > 0 && live.clock().now() >= duration_s) break;
    auto m = inlet.next(std::chrono::milliseconds(100));
    if (!m) {
      if (inlet.ended()) break;
      continue;
    }
    if (std::holds_alternative<stream::wire::Bye>(*m)) break;
    if (const auto* h = std::get_if<stream::wire::Hello>(&*m)) {
      auto info = h->info();
      const auto remote = info.stream_id;
      ids[remote] = live.add_stream(info);
      continue;
    }
    const auto id = stream::wire::stream_id_of(*m);
    if (!id || !ids.contains(*id)) throw protocol_error("data frame for a stream the device never announced");
    stream::wire::set_stream_id(*m, ids[*id]);
    stream::wire::shift_timestamps(*m, base);
    live.publish(*m);
  }
}

/// Runs every configured source to completion (or until `stop`), one thread
/// for the simulated devices and one per TCP device. The first source error
/// is rethrown after all threads finish.
inline void run_sources(LiveSession& live, const SessionConfig& cfg, std::atomic<bool>& stop) {
  std::vector<std::thread> threads;
  std::mutex err_mu;
  std::exception_ptr first_error;
  const auto guarded = [&](auto fn) {
    return [&, fn] {
      try {
        fn();
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        stop = true;
      }
    };
  };
  threads.emplace_back(guarded([&] { run_sim_sources(live, cfg, &stop); }));
  for (const auto& s : cfg.sources)
    if (s.type == SourceType::tcp)
      threads.emplace_back(guarded([&live, &s, &cfg, &stop] { run_tcp_source(live, s.tcp, cfg.duration_s, &stop); }));
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ------------------------------------------------------------ replay

struct ReplayPlan {
  std::vector<stream::StreamInfo> streams;  // file order, file ids
  std::vector<stream::wire::Message> data;  // CHUNK and MARKER frames in file order
  double first_time = 0.0;
  bool truncated = false;
};

inline ReplayPlan load_replay(const std::filesystem::path& path) {
  auto file = stream::read_recording_frames(path);
  ReplayPlan plan;
  plan.truncated = file.truncated_tail;
  std::optional<double> first;
  for (auto& f : file.frames) {
    if (const auto* h = std::get_if<stream::wire::Hello>(&f.message)) {
      plan.streams.push_back(h->info());
    } else if (auto t = stream::wire::last_timestamp(f.message)) {
      if (!first) first = *t;
      plan.data.push_back(std::move(f.message));
    }
  }
  plan.first_time = first.value_or(0.0);
  return plan;
}

using IdMap = std::map<stream::StreamId, stream::StreamId>;

/// Announces the recording's streams in the live session, in file order.
inline IdMap register_replay(LiveSession& live, const ReplayPlan& plan) {
  IdMap ids;
  for (const auto& s : plan.streams) {
    if (ids.contains(s.stream_id)) throw protocol_error("duplicate HELLO for stream_id " + std::to_string(s.stream_id));
    ids[s.stream_id] = live.add_stream(s);
  }
  return ids;
}

/// Re-publishes the data frames, pacing each by its last timestamp scaled by
/// the clock's speed.
inline void play_replay(LiveSession& live, const ReplayPlan& plan, const IdMap& ids, const std::atomic<bool>* stop) {
  for (const auto& f : plan.data) {
    if (!live.clock().wait_until(*stream::wire::last_timestamp(f), stop)) return;
    auto m = f;
    const auto id = *stream::wire::stream_id_of(m);
    const auto it = ids.find(id);
    if (it == ids.end()) throw protocol_error("recording has data for unannounced stream_id " + std::to_string(id));
    stream::wire::set_stream_id(m, it->second);
    live.publish(m);
  }
}

}  // namespace biostream::app
