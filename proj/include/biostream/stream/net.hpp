#pragma once

// TCP transport for the wire protocol. An outlet is a device (or replay) that
// accepts any number of inlets, greets each with HELLO frames, broadcasts data
// frames and answers CLOCK_PING. An inlet connects to one outlet, runs ping
// bursts and hands out data frames with timestamps moved onto its own clock.

#include <array>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>

#include "biostream/stream/clock.hpp"
#include "biostream/stream/session.hpp"
#include "biostream/stream/wire.hpp"

namespace biostream::stream::net {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Bytes = std::shared_ptr<const std::vector<std::uint8_t>>;

inline Bytes encode_shared(const wire::Message& m) {
  return std::make_shared<const std::vector<std::uint8_t>>(wire::encode(m));
}

/// One socket with a serialized async write queue and a frame read loop.
/// All callbacks run on the owning io_context thread.
class FrameConnection : public std::enable_shared_from_this<FrameConnection> {
 public:
  using OnFrame = std::function<void(wire::Message, double arrival_local_s)>;
  using OnClose = std::function<void(const std::string& reason)>;

  explicit FrameConnection(tcp::socket socket) : socket_(std::move(socket)) {}

  void start(OnFrame on_frame, OnClose on_close) {
    on_frame_ = std::move(on_frame);
    on_close_ = std::move(on_close);
    read_header();
  }

  /// Thread-safe.
  void send(Bytes frame) {
    asio::post(socket_.get_executor(), [self = shared_from_this(), frame = std::move(frame)] {
      if (self->closed_) return;
      self->queue_.push_back(frame);
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  /// Closes once every queued frame has been written. Thread-safe.
  void close_after_flush() {
    asio::post(socket_.get_executor(), [self = shared_from_this()] {
      self->close_pending_ = true;
      if (self->queue_.empty()) self->shutdown("closed");
    });
  }

  void close_now() {
    asio::post(socket_.get_executor(), [self = shared_from_this()] { self->shutdown("closed"); });
  }

 private:
  void read_header() {
    asio::async_read(socket_, asio::buffer(header_), [self = shared_from_this()](auto ec, std::size_t) {
      if (ec) return self->shutdown(ec == asio::error::eof ? "eof" : ec.message());
      try {
        const auto h = wire::parse_header(self->header_);
        self->payload_.resize(h.payload_len);
        self->read_payload();
      } catch (const Error& e) {
        self->shutdown(e.what());
      }
    });
  }

  void read_payload() {
    asio::async_read(socket_, asio::buffer(payload_), [self = shared_from_this()](auto ec, std::size_t) {
      if (ec) return self->shutdown(ec.message());
      const double now = local_clock();
      std::vector<std::uint8_t> frame(self->header_.begin(), self->header_.end());
      frame.insert(frame.end(), self->payload_.begin(), self->payload_.end());
      std::optional<wire::Message> m;
      try {
        m = wire::decode(frame);
      } catch (const Error& e) {
        return self->shutdown(e.what());
      }
      if (self->on_frame_) self->on_frame_(std::move(*m), now);
      if (!self->closed_) self->read_header();
    });
  }

  void write_next() {
    asio::async_write(socket_, asio::buffer(*queue_.front()), [self = shared_from_this()](auto ec, std::size_t) {
      if (self->closed_) return;
      if (ec) return self->shutdown(ec.message());
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->write_next();
      } else if (self->close_pending_) {
        self->shutdown("closed");
      }
    });
  }

  void shutdown(const std::string& reason) {
    if (closed_) return;
    closed_ = true;
    // queued buffers stay alive until an in-flight write completes
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
    if (on_close_) on_close_(reason);
    on_frame_ = nullptr;
    on_close_ = nullptr;
  }

  tcp::socket socket_;
  std::array<std::uint8_t, wire::kHeaderSize> header_{};
  std::vector<std::uint8_t> payload_;
  std::deque<Bytes> queue_;
  OnFrame on_frame_;
  OnClose on_close_;
  bool closed_ = false;
  bool close_pending_ = false;
};

/// Publishing end. `clock` stamps the t1/t2 of pong replies and must be the
/// clock the published timestamps refer to.
class TcpOutlet {
 public:
  TcpOutlet(std::vector<StreamInfo> streams, unsigned short port, std::function<double()> clock = local_clock)
      : streams_(std::move(streams)), clock_(std::move(clock)), acceptor_(io_) {
    try {
      const tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), port);
      acceptor_.open(ep.protocol());
      acceptor_.set_option(tcp::acceptor::reuse_address(true));
      acceptor_.bind(ep);
      acceptor_.listen();
    } catch (const boost::system::system_error& e) {
      throw io_error("cannot listen on port " + std::to_string(port) + ": " + e.what());
    }
    port_ = acceptor_.local_endpoint().port();
    accept();
    thread_ = std::thread([this] { io_.run(); });
  }

  TcpOutlet(const TcpOutlet&) = delete;
  TcpOutlet& operator=(const TcpOutlet&) = delete;
  ~TcpOutlet() { close(); }

  unsigned short port() const { return port_; }

  std::size_t client_count() const {
    std::lock_guard lock(mu_);
    return clients_.size();
  }

  bool wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return clients_.size() >= n; });
  }

  void publish(const wire::Message& m) { broadcast(encode_shared(m)); }

  void broadcast(Bytes frame) {
    std::lock_guard lock(mu_);
    for (auto& c : clients_) c->send(frame);
  }

  /// Sends BYE to every client, flushes and stops.
  void close() {
    if (!thread_.joinable()) return;
    {
      std::lock_guard lock(mu_);
      const auto bye = encode_shared(wire::Bye{});
      for (auto& c : clients_) {
        c->send(bye);
        c->close_after_flush();
      }
    }
    asio::post(io_, [this] {
      boost::system::error_code ignored;
      acceptor_.close(ignored);
    });
    thread_.join();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](auto ec, tcp::socket socket) {
      if (ec) return;
      socket.set_option(tcp::no_delay(true));
      auto conn = std::make_shared<FrameConnection>(std::move(socket));
      std::weak_ptr<FrameConnection> weak = conn;
      conn->start(
          [this, weak](wire::Message m, double) {
            const double t1 = clock_();
            if (const auto* ping = std::get_if<wire::ClockPing>(&m)) {
              if (auto c = weak.lock()) c->send(encode_shared(wire::ClockPong{ping->t0, t1, clock_()}));
            }
          },
          [this, weak](const std::string&) {
            std::lock_guard lock(mu_);
            std::erase_if(clients_, [&](const auto& c) { return c == weak.lock() || !weak.lock(); });
          });
      for (const auto& s : streams_) conn->send(encode_shared(wire::Hello::from(s)));
      {
        std::lock_guard lock(mu_);
        clients_.push_back(conn);
      }
      cv_.notify_all();
      accept();
    });
  }

  std::vector<StreamInfo> streams_;
  std::function<double()> clock_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::shared_ptr<FrameConnection>> clients_;
};

struct InletOptions {
  std::size_t exchanges_per_burst = 10;
  double exchange_spacing_s = 0.01;
  double burst_period_s = 5.0;
  /// Data is held back until the first burst completes or this much time
  /// passes, after which offset 0 is assumed.
  double first_estimate_timeout_s = 2.0;
};

/// Subscribing end of one outlet connection.
class TcpInlet {
 public:
  TcpInlet(const std::string& host, unsigned short port, InletOptions options = {})
      : options_(options), socket_(io_), timer_(io_) {
    try {
      tcp::resolver resolver(io_);
      asio::connect(socket_, resolver.resolve(host, std::to_string(port)));
      socket_.set_option(tcp::no_delay(true));
    } catch (const boost::system::system_error& e) {
      throw io_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + e.what());
    }
    connected_at_ = local_clock();
    conn_ = std::make_shared<FrameConnection>(std::move(socket_));
    conn_->start([this](wire::Message m, double arrival) { on_frame(std::move(m), arrival); },
                 [this](const std::string& reason) { on_close(reason); });
    start_burst();
    thread_ = std::thread([this] { io_.run(); });
  }

  TcpInlet(const TcpInlet&) = delete;
  TcpInlet& operator=(const TcpInlet&) = delete;
  ~TcpInlet() { close(); }

  /// Next HELLO/CHUNK/MARKER/BYE with timestamps on the local clock; nullopt
  /// on timeout or after the connection ended and the queue drained.
  std::optional<wire::Message> next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (!pending_.empty() && (!offsets_.empty() || offset_timed_out())) {
        auto [m, arrival] = std::move(pending_.front());
        pending_.pop_front();
        wire::shift_timestamps(m, -offsets_.offset_at(arrival));
        return m;
      }
      if (pending_.empty() && ended_) return std::nullopt;
      if (cv_.wait_until(lock, std::min(deadline, std::chrono::steady_clock::now() + std::chrono::milliseconds(50))) ==
              std::cv_status::timeout &&
          std::chrono::steady_clock::now() >= deadline)
        return std::nullopt;
    }
  }

  bool ended() const {
    std::lock_guard lock(mu_);
    return ended_ && pending_.empty();
  }

  std::string end_reason() const {
    std::lock_guard lock(mu_);
    return end_reason_;
  }

  std::vector<ClockEstimate> estimates() const {
    std::lock_guard lock(mu_);
    return offsets_.estimates();
  }

  void close() {
    if (!thread_.joinable()) return;
    asio::post(io_, [this] {
      timer_.cancel();
      conn_->close_now();
    });
    thread_.join();
  }

 private:
  bool offset_timed_out() const { return local_clock() - connected_at_ > options_.first_estimate_timeout_s; }

  void start_burst() {
    burst_.clear();
    burst_start_ = local_clock();
    sent_in_burst_ = 0;
    send_ping();
  }

  void send_ping() {
    if (stopped_) return;
    conn_->send(encode_shared(wire::ClockPing{local_clock()}));
    ++sent_in_burst_;
    const bool more = sent_in_burst_ < options_.exchanges_per_burst;
    const double wait = more ? options_.exchange_spacing_s
                             : std::max(0.0, burst_start_ + options_.burst_period_s - local_clock());
    timer_.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(wait)));
    timer_.async_wait([this, more](auto ec) {
      if (ec || stopped_) return;
      if (more) {
        send_ping();
      } else {
        finish_burst();
        start_burst();
      }
    });
  }

  void finish_burst() {
    if (burst_.empty()) return;
    std::lock_guard lock(mu_);
    offsets_.add(burst_start_, estimate_clock_offset(burst_));
    burst_.clear();
    cv_.notify_all();
  }

  void on_frame(wire::Message m, double arrival) {
    if (const auto* pong = std::get_if<wire::ClockPong>(&m)) {
      burst_.push_back({pong->t0, pong->t1, pong->t2, arrival});
      if (burst_.size() == options_.exchanges_per_burst) finish_burst();
      return;
    }
    if (std::holds_alternative<wire::ClockPing>(m)) return;
    std::lock_guard lock(mu_);
    pending_.emplace_back(std::move(m), arrival);
    cv_.notify_all();
  }

  void on_close(const std::string& reason) {
    stopped_ = true;
    timer_.cancel();
    std::lock_guard lock(mu_);
    ended_ = true;
    end_reason_ = reason;
    cv_.notify_all();
  }

  InletOptions options_;
  asio::io_context io_;
  tcp::socket socket_;
  asio::steady_timer timer_;
  std::shared_ptr<FrameConnection> conn_;
  std::thread thread_;
  double connected_at_ = 0.0;

  // io thread only
  std::vector<ClockExchange> burst_;
  double burst_start_ = 0.0;
  std::size_t sent_in_burst_ = 0;
  bool stopped_ = false;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::pair<wire::Message, double>> pending_;
  OffsetTrack offsets_;
  bool ended_ = false;
  std::string end_reason_;
};

}  // namespace biostream::stream::net
