#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string_view>
#include <vector>

#include "biostream/stream/types.hpp"

namespace biostream::stream {

using ChunkPtr = std::shared_ptr<const Chunk>;

/// Seconds on the local monotonic clock.
inline double local_clock() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

/// Receiving end of a subscription. Chunks are delivered in push order.
class Inlet {
 public:
  explicit Inlet(std::optional<StreamId> filter) : filter_(filter) {}

  bool accepts(StreamId id) const { return !filter_ || *filter_ == id; }

  void deliver(ChunkPtr chunk) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      queue_.push_back(std::move(chunk));
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  /// Blocks up to `timeout`; nullopt on timeout or once closed and drained.
  std::optional<ChunkPtr> pull(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [this] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    auto c = std::move(queue_.front());
    queue_.pop_front();
    return c;
  }

  std::vector<ChunkPtr> drain() {
    std::lock_guard lock(mu_);
    std::vector<ChunkPtr> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  std::optional<StreamId> filter_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<ChunkPtr> queue_;
  bool closed_ = false;
};

/// Registry of the streams in one recording session plus fan-out of pushed
/// chunks to subscribed inlets.
class Session {
 public:
  StreamId register_stream(StreamInfo info) {
    validate(info);
    std::unique_lock lock(mu_);
    for (const auto& s : streams_)
      if (s.source_id == info.source_id)
        throw Error(ErrorCode::registration, "source_id '" + info.source_id + "' is already registered");
    if (streams_.size() > 0xFFFF) throw Error(ErrorCode::registration, "stream id space exhausted");
    info.stream_id = static_cast<StreamId>(streams_.size());
    streams_.push_back(std::move(info));
    return streams_.back().stream_id;
  }

  std::optional<StreamInfo> resolve(std::string_view source_id) const {
    std::shared_lock lock(mu_);
    for (const auto& s : streams_)
      if (s.source_id == source_id) return s;
    return std::nullopt;
  }

  std::optional<StreamInfo> info(StreamId id) const {
    std::shared_lock lock(mu_);
    if (id >= streams_.size()) return std::nullopt;
    return streams_[id];
  }

  std::vector<StreamInfo> streams() const {
    std::shared_lock lock(mu_);
    return streams_;
  }

  /// Validates and fans the chunk out to every matching inlet.
  void push_chunk(StreamId id, Chunk chunk) {
    const auto si = info(id);
    if (!si) throw Error(ErrorCode::rejected_chunk, "unknown stream_id " + std::to_string(id));
    chunk.stream_id = id;
    if (si->kind == StreamKind::MARKER) {
      if (!chunk.is_marker() || !chunk.timestamps.empty())
        throw Error(ErrorCode::rejected_chunk, "MARKER stream accepts marker chunks only");
      chunk.channel_count = si->channel_count;
    } else {
      if (chunk.is_marker()) throw Error(ErrorCode::rejected_chunk, "markers pushed to a regular stream");
      if (chunk.channel_count == 0) chunk.channel_count = si->channel_count;
      if (chunk.channel_count != si->channel_count)
        throw Error(ErrorCode::rejected_chunk, "channel count differs from stream info");
    }
    validate(chunk);
    auto shared = std::make_shared<const Chunk>(std::move(chunk));
    std::lock_guard lock(sub_mu_);
    for (auto& inlet : inlets_)
      if (inlet->accepts(id)) inlet->deliver(shared);
  }

  std::shared_ptr<Inlet> subscribe(std::optional<StreamId> filter = std::nullopt) {
    auto inlet = std::make_shared<Inlet>(filter);
    std::lock_guard lock(sub_mu_);
    inlets_.push_back(inlet);
    return inlet;
  }

  void unsubscribe(const std::shared_ptr<Inlet>& inlet) {
    inlet->close();
    std::lock_guard lock(sub_mu_);
    std::erase(inlets_, inlet);
  }

  void close_all() {
    std::lock_guard lock(sub_mu_);
    for (auto& inlet : inlets_) inlet->close();
  }

 private:
  mutable std::shared_mutex mu_;
  std::vector<StreamInfo> streams_;
  std::mutex sub_mu_;
  std::vector<std::shared_ptr<Inlet>> inlets_;
};

}  // namespace biostream::stream
