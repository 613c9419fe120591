#pragma once

// Dashboard bridge: a WebSocket endpoint speaking JSON envelopes
// {type, stream_id?, id?, payload}.
//
// server -> client: info, samples (decimated), marker, scalp, ack, error
// client -> server: tag, calib_start, calib_point_shown, session_cmd
//
// Client commands become MARKER chunks on the "dashboard" stream, stamped with
// the session clock. Client-supplied times are echoed but never trusted.

#include <atomic>
#include <cmath>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "biostream/app/graph.hpp"
#include "biostream/app/runtime.hpp"

namespace biostream::app {

struct BridgeOptions {
  unsigned short port = 0;
  double max_points_per_s = 50.0;
  std::string scalp_source;
  double scalp_period_s = 2.0;
  std::size_t scalp_resolution = 32;
  double ica_init_s = 10.0;
  std::map<std::string, ica::Point2> montage;
  GazeFlowOptions gaze;
  /// Oldest gaze samples beyond this many are dropped from the calibration buffer.
  std::size_t gaze_buffer_samples = 200000;
  /// A client whose send queue exceeds this loses "samples" messages until it catches up.
  std::size_t max_queued_messages = 4096;
};

inline BridgeOptions bridge_options(const SessionConfig& cfg) {
  BridgeOptions o;
  o.port = cfg.dashboard.port;
  o.max_points_per_s = cfg.dashboard.max_points_per_s;
  o.scalp_source = cfg.dashboard.scalp_source;
  o.scalp_period_s = cfg.dashboard.scalp_period_s;
  o.scalp_resolution = cfg.dashboard.scalp_resolution;
  o.ica_init_s = cfg.dashboard.ica_init_s;
  o.montage = cfg.montage;
  return o;
}

/// Keeps every k-th sample so that rate / k <= max_points_per_s.
inline std::size_t decimation_step(double rate_hz, double max_points_per_s) {
  if (rate_hz <= 0.0) return 1;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(rate_hz / max_points_per_s - 1e-9)));
}

inline nlohmann::json envelope(const std::string& type, const nlohmann::json& payload,
                               std::optional<stream::StreamId> stream_id = std::nullopt) {
  nlohmann::json j{{"type", type}, {"payload", payload}};
  if (stream_id) j["stream_id"] = *stream_id;
  return j;
}

namespace detail {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Text = std::shared_ptr<const std::string>;

class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  struct Hooks {
    std::function<void(std::shared_ptr<WsClient>)> opened;
    std::function<void(std::shared_ptr<WsClient>, const std::string&)> message;
    std::function<void(std::shared_ptr<WsClient>)> closed;
  };

  WsClient(tcp::socket socket, Hooks hooks, std::size_t max_queue)
      : ws_(std::move(socket)), hooks_(std::move(hooks)), max_queue_(max_queue) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->hooks_.opened(self);
      self->read();
    });
  }

  /// Thread-safe. Droppable messages are skipped while the queue is long.
  void send(Text text, bool droppable = false) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text), droppable] {
      if (!self->open_) return;
      if (droppable && self->queue_.size() >= self->max_queue_) return;
      self->queue_.push_back(text);
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  void close() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      if (!self->open_) return;
      self->closing_ = true;
      if (self->queue_.empty()) self->do_close();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->hooks_.message(self, text);
      self->read();
    });
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec || !self->open_) return self->finish();
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->write_next();
      } else if (self->closing_) {
        self->do_close();
      }
    });
  }

  void do_close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->finish(); });
  }

  void finish() {
    if (!open_) return;
    open_ = false;
    hooks_.closed(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  Hooks hooks_;
  std::size_t max_queue_;
  std::deque<Text> queue_;
  bool open_ = false;
  bool closing_ = false;
};

}  // namespace detail

class Bridge {
 public:
  Bridge(LiveSession& live, BridgeOptions options)
      : live_(live), options_(std::move(options)), acceptor_(io_) {
    stream::StreamInfo info;
    info.name = "dashboard";
    info.source_id = "dashboard";
    info.kind = stream::StreamKind::MARKER;
    info.channel_count = 1;
    info.nominal_rate_hz = 0.0;
    info.channel_labels = {"marker"};
    marker_stream_ = live_.add_stream(info);
    try {
      const detail::tcp::endpoint ep(detail::asio::ip::make_address("127.0.0.1"), options_.port);
      acceptor_.open(ep.protocol());
      acceptor_.set_option(detail::tcp::acceptor::reuse_address(true));
      acceptor_.bind(ep);
      acceptor_.listen();
    } catch (const boost::system::system_error& e) {
      throw io_error("dashboard bridge cannot listen on port " + std::to_string(options_.port) + ": " + e.what());
    }
    port_ = acceptor_.local_endpoint().port();
    inlet_ = live_.session().subscribe();
    accept();
    std::promise<void> done;
    io_done_ = done.get_future().share();
    io_thread_ = std::thread([this, done = std::move(done)]() mutable {
      io_.run();
      done.set_value();
    });
    forward_thread_ = std::thread([this] { forward(); });
  }

  Bridge(const Bridge&) = delete;
  Bridge& operator=(const Bridge&) = delete;
  ~Bridge() { close(); }

  unsigned short port() const { return port_; }
  stream::StreamId marker_stream() const { return marker_stream_; }

  std::size_t client_count() const {
    std::lock_guard lock(clients_mu_);
    return clients_.size();
  }

  bool wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(clients_mu_);
    return clients_cv_.wait_for(lock, timeout, [&] { return clients_.size() >= n; });
  }

  /// Raised by session_cmd "stop".
  bool stop_requested() const { return stop_requested_.load(); }
  void on_stop(std::function<void()> fn) { stop_hook_ = std::move(fn); }

  std::optional<gaze::CalibrationModel> calibration() const {
    std::lock_guard lock(state_mu_);
    return model_;
  }

  void close() {
    if (closed_.exchange(true)) return;
    live_.session().unsubscribe(inlet_);
    if (forward_thread_.joinable()) forward_thread_.join();
    {
      std::lock_guard lock(clients_mu_);
      for (auto& c : clients_) c->close();
    }
    detail::asio::post(io_, [this] {
      boost::system::error_code ignored;
      acceptor_.close(ignored);
    });
    // clients get a moment to finish the close handshake
    if (io_done_.wait_for(std::chrono::seconds(2)) != std::future_status::ready) io_.stop();
    io_thread_.join();
  }

 private:
  using ClientPtr = std::shared_ptr<detail::WsClient>;

  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, detail::tcp::socket socket) {
      if (ec) return;
      detail::WsClient::Hooks hooks{
          [this](ClientPtr c) { opened(std::move(c)); },
          [this](ClientPtr c, const std::string& text) { handle(c, text); },
          [this](ClientPtr c) { closed(c); },
      };
      std::make_shared<detail::WsClient>(std::move(socket), std::move(hooks), options_.max_queued_messages)->start();
      accept();
    });
  }

  void opened(ClientPtr c) {
    for (const auto& s : live_.session().streams()) c->send(text(envelope("info", s, s.stream_id)));
    {
      std::lock_guard lock(clients_mu_);
      clients_.insert(c);
    }
    clients_cv_.notify_all();
  }

  void closed(const ClientPtr& c) {
    std::lock_guard lock(clients_mu_);
    clients_.erase(c);
  }

  static detail::Text text(const nlohmann::json& j) { return std::make_shared<const std::string>(j.dump()); }

  void broadcast(const nlohmann::json& j, bool droppable = false) {
    const auto t = text(j);
    std::lock_guard lock(clients_mu_);
    for (auto& c : clients_) c->send(t, droppable);
  }

  // ---------------------------------------------------------- data forwarding

  struct StreamState {
    stream::StreamInfo info;
    std::size_t step = 1;
    std::size_t seen = 0;
  };

  void forward() {
    while (true) {
      auto chunk = inlet_->pull(std::chrono::milliseconds(100));
      if (!chunk) {
        if (inlet_->closed()) return;
        continue;
      }
      try {
        forward_chunk(**chunk);
      } catch (const std::exception&) {
        // a malformed stream must not take the bridge down
      }
    }
  }

  StreamState& state_for(stream::StreamId id) {
    auto it = streams_.find(id);
    if (it != streams_.end()) return it->second;
    StreamState s;
    s.info = live_.session().info(id).value();
    s.step = decimation_step(s.info.nominal_rate_hz, options_.max_points_per_s);
    return streams_.emplace(id, s).first->second;
  }

  void forward_chunk(const stream::Chunk& c) {
    const bool fresh = !streams_.contains(c.stream_id);
    auto& st = state_for(c.stream_id);
    if (fresh) broadcast(envelope("info", st.info, c.stream_id));
    if (c.is_marker()) {
      for (const auto& m : c.markers)
        broadcast(envelope("marker", {{"t", m.timestamp}, {"text", m.text}}, c.stream_id));
      return;
    }
    nlohmann::json ts = nlohmann::json::array();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < c.size(); ++i, ++st.seen) {
      if (st.seen % st.step != 0) continue;
      ts.push_back(c.timestamps[i]);
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t ch = 0; ch < c.channel_count; ++ch) {
        const float v = c.at(i, ch);
        row.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
      }
      rows.push_back(std::move(row));
    }
    if (!ts.empty()) broadcast(envelope("samples", {{"t", std::move(ts)}, {"data", std::move(rows)}}, c.stream_id), true);
    if (st.info.kind == stream::StreamKind::GAZE && c.channel_count >= 3) keep_gaze(c);
    if (!options_.scalp_source.empty() && st.info.source_id == options_.scalp_source) feed_ica(st, c);
  }

  void keep_gaze(const stream::Chunk& c) {
    std::lock_guard lock(state_mu_);
    auto& buf = gaze_[c.stream_id];
    for (std::size_t i = 0; i < c.size(); ++i)
      buf.push_back({c.timestamps[i], {c.at(i, 0), c.at(i, 1)}, std::clamp<double>(c.at(i, 2), 0.0, 1.0)});
    while (buf.size() > options_.gaze_buffer_samples) buf.pop_front();
  }

  void feed_ica(const StreamState& st, const stream::Chunk& c) {
    const std::size_t n = c.channel_count;
    if (!ica_) {
      const auto init = static_cast<std::size_t>(std::llround(options_.ica_init_s * st.info.nominal_rate_hz));
      ica_.emplace(n, std::max(init, 10 * n));
      positions_ = montage_positions(options_.montage, st.info.channel_labels);
    }
    ica::Matrix m(static_cast<Eigen::Index>(c.size()), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t ch = 0; ch < n; ++ch) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ch)) = c.at(i, ch);
    ica_->push(m);
    if (!ica_->ready() || !positions_ || c.timestamps.empty()) return;
    const double t = c.timestamps.back();
    if (last_scalp_ && t - *last_scalp_ < options_.scalp_period_s) return;
    last_scalp_ = t;
    const auto maps = component_scalp_maps(ica_->state(), *positions_, options_.scalp_resolution);
    for (std::size_t k = 0; k < maps.size(); ++k) {
      auto payload = ica::to_json(maps[k], k);
      payload["t"] = t;
      broadcast(envelope("scalp", payload, c.stream_id));
    }
  }

  // ---------------------------------------------------------- commands

  void reply(const ClientPtr& c, const nlohmann::json& id, const std::string& type, nlohmann::json payload) {
    nlohmann::json j{{"type", type}, {"payload", std::move(payload)}};
    if (!id.is_null()) j["id"] = id;
    c->send(text(j));
  }

  void handle(const ClientPtr& c, const std::string& raw) {
    nlohmann::json id = nullptr;
    std::string cmd;
    try {
      const auto j = nlohmann::json::parse(raw);
      if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
        throw invalid_argument("message must be an object with a string \"type\"");
      if (j.contains("id")) id = j.at("id");
      cmd = j.at("type").get<std::string>();
      const auto payload = j.value("payload", nlohmann::json::object());
      if (!payload.is_object()) throw invalid_argument("payload must be an object");
      auto ack = dispatch(cmd, payload);
      ack["cmd"] = cmd;
      reply(c, id, "ack", std::move(ack));
    } catch (const std::exception& e) {
      reply(c, id, "error", {{"cmd", cmd.empty() ? nlohmann::json(nullptr) : nlohmann::json(cmd)}, {"message", e.what()}});
    }
  }

  nlohmann::json dispatch(const std::string& cmd, const nlohmann::json& p) {
    if (cmd == "tag") {
      const auto label = p.at("label").get<std::string>();
      if (label.find_first_not_of(" \t\r\n") == std::string::npos) throw invalid_argument("tag label must not be empty");
      const double t = live_.push_marker(marker_stream_, "tag," + label);
      return {{"t", t}, {"client_t", p.value("t", nlohmann::json(nullptr))}};
    }
    if (cmd == "calib_start") {
      std::lock_guard lock(state_mu_);
      calib_active_ = true;
      calib_points_.clear();
      const double t = live_.push_marker(marker_stream_, "calib_start");
      return {{"t", t}};
    }
    if (cmd == "calib_point_shown") {
      const auto index = p.at("index").get<std::size_t>();
      const auto x = p.at("x_px").get<double>();
      const auto y = p.at("y_px").get<double>();
      if (!std::isfinite(x) || !std::isfinite(y)) throw invalid_argument("calib_point_shown: non-finite position");
      std::lock_guard lock(state_mu_);
      if (!calib_active_) throw invalid_argument("calib_point_shown outside a calibration (send calib_start first)");
      const double t = live_.push_marker(marker_stream_, calib_marker_text(index, x, y));
      calib_points_.push_back({index, {x, y}, t});
      return {{"t", t}, {"client_t", p.value("t", nlohmann::json(nullptr))}, {"points", calib_points_.size()}};
    }
    if (cmd == "session_cmd") return session_cmd(p.at("cmd").get<std::string>(), p);
    throw invalid_argument("unknown command type '" + cmd + "'");
  }

  nlohmann::json session_cmd(const std::string& what, const nlohmann::json& p) {
    if (what == "status") {
      nlohmann::json streams = nlohmann::json::array();
      for (const auto& s : live_.session().streams()) streams.push_back(s);
      std::lock_guard lock(state_mu_);
      return {{"t", live_.clock().now()}, {"streams", streams}, {"clients", client_count()},
              {"calibrating", calib_active_}, {"calibrated", model_.has_value()}};
    }
    if (what == "stop") {
      stop_requested_ = true;
      if (stop_hook_) stop_hook_();
      return {{"t", live_.clock().now()}};
    }
    if (what == "calib_abort") {
      std::lock_guard lock(state_mu_);
      calib_active_ = false;
      calib_points_.clear();
      const double t = live_.push_marker(marker_stream_, "calib_abort");
      return {{"t", t}};
    }
    if (what == "calib_fit") {
      std::lock_guard lock(state_mu_);
      if (!calib_active_) throw invalid_argument("calib_fit without an active calibration");
      const auto source = pick_gaze_stream(p.value("source_id", std::string()));
      const auto& buf = gaze_.at(source);
      std::vector<gaze::PupilSample> samples(buf.begin(), buf.end());
      auto opts = options_.gaze;
      if (p.contains("options")) opts = p.at("options").get<GazeFlowOptions>();
      const auto flow = run_gaze_flow(samples, calib_points_, opts);
      model_ = flow.model;
      calib_active_ = false;
      const double t = live_.push_marker(marker_stream_, "calib_fit");
      auto out = to_json(flow);
      out["t"] = t;
      out["stream_id"] = source;
      return out;
    }
    throw invalid_argument("unknown session_cmd '" + what + "'");
  }

  /// Caller holds state_mu_.
  stream::StreamId pick_gaze_stream(const std::string& source_id) const {
    if (!source_id.empty()) {
      const auto info = live_.session().resolve(source_id);
      if (!info || !gaze_.contains(info->stream_id)) throw invalid_argument("no gaze samples from '" + source_id + "'");
      return info->stream_id;
    }
    if (gaze_.empty()) throw invalid_argument("no gaze samples received yet");
    return gaze_.begin()->first;
  }

  LiveSession& live_;
  BridgeOptions options_;
  stream::StreamId marker_stream_ = 0;

  detail::asio::io_context io_;
  detail::tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::thread io_thread_;
  std::shared_future<void> io_done_;
  std::thread forward_thread_;
  std::shared_ptr<stream::Inlet> inlet_;
  std::atomic<bool> closed_{false};
  std::atomic<bool> stop_requested_{false};
  std::function<void()> stop_hook_;

  mutable std::mutex clients_mu_;
  std::condition_variable clients_cv_;
  std::set<ClientPtr> clients_;

  // forward thread only
  std::map<stream::StreamId, StreamState> streams_;
  std::optional<ica::OnlineIca> ica_;
  std::optional<std::vector<ica::Point2>> positions_;
  std::optional<double> last_scalp_;

  mutable std::mutex state_mu_;
  std::map<stream::StreamId, std::deque<gaze::PupilSample>> gaze_;
  bool calib_active_ = false;
  std::vector<CalibPoint> calib_points_;
  std::optional<gaze::CalibrationModel> model_;
};

}  // namespace biostream::app
