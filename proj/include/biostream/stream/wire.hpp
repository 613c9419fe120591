#pragma once

// MBSP framed wire protocol. Every frame is
//   "MBSP" | version u8 | msg_type u8 | payload_len u32 | payload
// with all integers and reals little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "biostream/stream/types.hpp"

namespace biostream::stream::wire {

inline constexpr std::array<std::uint8_t, 4> kMagic{0x4D, 0x42, 0x53, 0x50};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::uint32_t kMaxPayload = 64u << 20;

enum class MsgType : std::uint8_t {
  hello = 0x01,
  chunk = 0x02,
  clock_ping = 0x03,
  clock_pong = 0x04,
  marker = 0x05,
  bye = 0x06,
};

/// StreamInfo as UTF-8 JSON. The text is kept verbatim so re-encoding a
/// decoded frame reproduces it byte for byte.
struct Hello {
  std::string json;

  static Hello from(const StreamInfo& info) { return Hello{nlohmann::json(info).dump()}; }
  StreamInfo info() const {
    try {
      return nlohmann::json::parse(json).get<StreamInfo>();
    } catch (const nlohmann::json::exception& e) {
      throw protocol_error(std::string("HELLO payload is not a valid StreamInfo: ") + e.what());
    }
  }
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct ChunkFrame {
  StreamId stream_id = 0;
  std::uint16_t n_channels = 0;
  std::vector<double> timestamps;
  std::vector<float> samples;  // row-major n_samples x n_channels

  friend bool operator==(const ChunkFrame& a, const ChunkFrame& b) {
    // bitwise, so NaN payloads compare equal to themselves
    return a.stream_id == b.stream_id && a.n_channels == b.n_channels &&
           a.timestamps.size() == b.timestamps.size() && a.samples.size() == b.samples.size() &&
           std::memcmp(a.timestamps.data(), b.timestamps.data(), a.timestamps.size() * sizeof(double)) == 0 &&
           std::memcmp(a.samples.data(), b.samples.data(), a.samples.size() * sizeof(float)) == 0;
  }
};

struct ClockPing {
  double t0 = 0.0;
  friend bool operator==(const ClockPing&, const ClockPing&) = default;
};

struct ClockPong {
  double t0 = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  friend bool operator==(const ClockPong&, const ClockPong&) = default;
};

struct MarkerFrame {
  StreamId stream_id = 0;
  double timestamp = 0.0;
  std::string text;
  friend bool operator==(const MarkerFrame&, const MarkerFrame&) = default;
};

struct Bye {
  friend bool operator==(const Bye&, const Bye&) = default;
};

using Message = std::variant<Hello, ChunkFrame, ClockPing, ClockPong, MarkerFrame, Bye>;

namespace detail {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return get_le<std::uint8_t>(); }
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw protocol_error("truncated payload");
  }
  template <typename U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline MsgType type_of(const Message& m) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Hello>) return MsgType::hello;
        else if constexpr (std::is_same_v<T, ChunkFrame>) return MsgType::chunk;
        else if constexpr (std::is_same_v<T, ClockPing>) return MsgType::clock_ping;
        else if constexpr (std::is_same_v<T, ClockPong>) return MsgType::clock_pong;
        else if constexpr (std::is_same_v<T, MarkerFrame>) return MsgType::marker;
        else return MsgType::bye;
      },
      m);
}

inline void encode_payload(const Message& m, Writer& w) {
  std::visit(
      [&w](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Hello>) {
          w.bytes(v.json);
        } else if constexpr (std::is_same_v<T, ChunkFrame>) {
          const std::size_t n = v.timestamps.size();
          if (n > 0xFFFF) throw invalid_argument("CHUNK frame holds at most 65535 samples");
          if (v.samples.size() != n * v.n_channels) throw invalid_argument("CHUNK sample count mismatch");
          w.u16(v.stream_id);
          w.u16(static_cast<std::uint16_t>(n));
          w.u16(v.n_channels);
          for (double t : v.timestamps) w.f64(t);
          for (float s : v.samples) w.f32(s);
        } else if constexpr (std::is_same_v<T, ClockPing>) {
          w.f64(v.t0);
        } else if constexpr (std::is_same_v<T, ClockPong>) {
          w.f64(v.t0);
          w.f64(v.t1);
          w.f64(v.t2);
        } else if constexpr (std::is_same_v<T, MarkerFrame>) {
          if (v.text.size() > 0xFFFF) throw invalid_argument("MARKER text longer than 65535 bytes");
          w.u16(v.stream_id);
          w.f64(v.timestamp);
          w.u16(static_cast<std::uint16_t>(v.text.size()));
          w.bytes(v.text);
        }
      },
      m);
}

inline Message decode_payload(MsgType type, std::span<const std::uint8_t> payload) {
  Reader r(payload);
  Message m;
  switch (type) {
    case MsgType::hello:
      m = Hello{r.bytes(payload.size())};
      break;
    case MsgType::chunk: {
      ChunkFrame c;
      c.stream_id = r.u16();
      const std::size_t n = r.u16();
      c.n_channels = r.u16();
      if (r.remaining() != n * 8 + n * c.n_channels * 4) throw protocol_error("CHUNK payload length mismatch");
      c.timestamps.resize(n);
      for (auto& t : c.timestamps) t = r.f64();
      c.samples.resize(n * c.n_channels);
      for (auto& s : c.samples) s = r.f32();
      m = std::move(c);
      break;
    }
    case MsgType::clock_ping:
      m = ClockPing{r.f64()};
      break;
    case MsgType::clock_pong: {
      ClockPong p;
      p.t0 = r.f64();
      p.t1 = r.f64();
      p.t2 = r.f64();
      m = p;
      break;
    }
    case MsgType::marker: {
      MarkerFrame mk;
      mk.stream_id = r.u16();
      mk.timestamp = r.f64();
      const std::size_t len = r.u16();
      mk.text = r.bytes(len);
      m = std::move(mk);
      break;
    }
    case MsgType::bye:
      m = Bye{};
      break;
    default:
      throw protocol_error("unknown msg_type " + std::to_string(static_cast<int>(type)));
  }
  if (r.remaining() != 0) throw protocol_error("trailing bytes in payload");
  return m;
}

}  // namespace detail

inline void encode(const Message& m, std::vector<std::uint8_t>& out) {
  const std::size_t start = out.size();
  detail::Writer w(out);
  for (auto b : kMagic) w.u8(b);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(detail::type_of(m)));
  w.u32(0);
  detail::encode_payload(m, w);
  const auto len = static_cast<std::uint32_t>(out.size() - start - kHeaderSize);
  for (std::size_t i = 0; i < 4; ++i) out[start + 6 + i] = static_cast<std::uint8_t>(len >> (8 * i));
}

inline std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> out;
  encode(m, out);
  return out;
}

struct FrameHeader {
  MsgType type;
  std::uint32_t payload_len;
};

inline FrameHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw protocol_error("truncated frame header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw protocol_error("bad frame magic");
  if (bytes[4] != kVersion) throw protocol_error("unsupported protocol version " + std::to_string(bytes[4]));
  const auto type = bytes[5];
  if (type < 0x01 || type > 0x06) throw protocol_error("unknown msg_type " + std::to_string(type));
  detail::Reader r(bytes.subspan(6, 4));
  const auto len = r.u32();
  if (len > kMaxPayload) throw protocol_error("payload too large");
  return {static_cast<MsgType>(type), len};
}

/// Decodes exactly one complete frame; throws on malformed or trailing input.
inline Message decode(std::span<const std::uint8_t> frame) {
  const auto h = parse_header(frame);
  if (frame.size() != kHeaderSize + h.payload_len) throw protocol_error("frame length mismatch");
  return detail::decode_payload(h.type, frame.subspan(kHeaderSize));
}

/// Incremental decoder for a byte stream (socket or file).
class FrameDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  /// Next whole frame, or nullopt if more bytes are needed.
  std::optional<Message> next() {
    compact();
    const std::span<const std::uint8_t> avail(buf_.data() + pos_, buf_.size() - pos_);
    if (avail.size() < kHeaderSize) return std::nullopt;
    const auto h = parse_header(avail);
    if (avail.size() < kHeaderSize + h.payload_len) return std::nullopt;
    auto m = detail::decode_payload(h.type, avail.subspan(kHeaderSize, h.payload_len));
    pos_ += kHeaderSize + h.payload_len;
    return m;
  }

  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  void compact() {
    if (pos_ > 0 && pos_ * 2 > buf_.size()) {
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
      pos_ = 0;
    }
  }

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

inline ChunkFrame to_frame(const Chunk& c) {
  if (c.is_marker()) throw invalid_argument("marker chunks travel as MARKER frames");
  if (c.channel_count > 0xFFFF) throw invalid_argument("too many channels for a CHUNK frame");
  return ChunkFrame{c.stream_id, static_cast<std::uint16_t>(c.channel_count), c.timestamps, c.samples};
}

inline Chunk to_chunk(const ChunkFrame& f) {
  Chunk c;
  c.stream_id = f.stream_id;
  c.channel_count = f.n_channels;
  c.timestamps = f.timestamps;
  c.samples = f.samples;
  return c;
}

/// Frames for one chunk: a CHUNK frame, or one MARKER frame per marker.
inline std::vector<Message> to_messages(const Chunk& c) {
  std::vector<Message> out;
  if (c.is_marker()) {
    for (const auto& m : c.markers) out.emplace_back(MarkerFrame{c.stream_id, m.timestamp, m.text});
  } else {
    out.emplace_back(to_frame(c));
  }
  return out;
}

/// Moves every timestamp of a CHUNK or MARKER frame by `delta_s`.
inline void shift_timestamps(Message& m, double delta_s) {
  if (auto* c = std::get_if<ChunkFrame>(&m)) {
    for (auto& t : c->timestamps) t += delta_s;
  } else if (auto* mk = std::get_if<MarkerFrame>(&m)) {
    mk->timestamp += delta_s;
  }
}

/// Stream id carried by HELLO, CHUNK and MARKER frames.
inline std::optional<StreamId> stream_id_of(const Message& m) {
  if (const auto* h = std::get_if<Hello>(&m)) return h->info().stream_id;
  if (const auto* c = std::get_if<ChunkFrame>(&m)) return c->stream_id;
  if (const auto* mk = std::get_if<MarkerFrame>(&m)) return mk->stream_id;
  return std::nullopt;
}

inline void set_stream_id(Message& m, StreamId id) {
  if (auto* h = std::get_if<Hello>(&m)) {
    auto info = h->info();
    info.stream_id = id;
    *h = Hello::from(info);
  } else if (auto* c = std::get_if<ChunkFrame>(&m)) {
    c->stream_id = id;
  } else if (auto* mk = std::get_if<MarkerFrame>(&m)) {
    mk->stream_id = id;
  }
}

/// Send time of a data frame: its last timestamp.
inline std::optional<double> last_timestamp(const Message& m) {
  if (const auto* c = std::get_if<ChunkFrame>(&m); c && !c->timestamps.empty()) return c->timestamps.back();
  if (const auto* mk = std::get_if<MarkerFrame>(&m)) return mk->timestamp;
  return std::nullopt;
}

}  // namespace biostream::stream::wire
