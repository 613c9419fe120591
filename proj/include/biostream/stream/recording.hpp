#pragma once

// .mbr recording files: the ASCII header "MBSR1\n" followed by MBSP frames
// in arrival order, verbatim.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "biostream/stream/align.hpp"
#include "biostream/stream/clock.hpp"
#include "biostream/stream/wire.hpp"

namespace biostream::stream {

inline constexpr std::string_view kRecordingHeader = "MBSR1\n";

/// Appends whole frames to a recording; each frame is flushed as a unit so an
/// interrupted recorder leaves only complete frames behind.
class RecordingWriter {
 public:
  explicit RecordingWriter(const std::filesystem::path& path) : path_(path) {
    file_ = std::fopen(path.c_str(), "wb");
    if (!file_) throw io_error("cannot open '" + path.string() + "' for writing");
    write_raw(kRecordingHeader.data(), kRecordingHeader.size());
  }
  RecordingWriter(const RecordingWriter&) = delete;
  RecordingWriter& operator=(const RecordingWriter&) = delete;
  ~RecordingWriter() {
    if (file_) std::fclose(file_);
  }

  void write(const wire::Message& m) {
    buf_.clear();
    wire::encode(m, buf_);
    write_frame_bytes(buf_);
  }

  void write_frame_bytes(std::span<const std::uint8_t> frame) {
    write_raw(frame.data(), frame.size());
    ++frames_;
  }

  void write_chunk(const Chunk& c) {
    for (const auto& m : wire::to_messages(c)) write(m);
  }

  std::size_t frames_written() const { return frames_; }

  void close() {
    if (file_ && std::fclose(file_) != 0) {
      file_ = nullptr;
      throw io_error("error closing '" + path_.string() + "'");
    }
    file_ = nullptr;
  }

 private:
  void write_raw(const void* data, std::size_t n) {
    if (std::fwrite(data, 1, n, file_) != n || std::fflush(file_) != 0)
      throw io_error("write to '" + path_.string() + "' failed");
  }

  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  std::vector<std::uint8_t> buf_;
  std::size_t frames_ = 0;
};

struct RawFrame {
  std::vector<std::uint8_t> bytes;
  wire::Message message;
};

struct RecordingFile {
  std::vector<RawFrame> frames;
  bool truncated_tail = false;  // trailing bytes that do not form a whole frame
};

/// Reads every whole frame. A corrupt frame header throws a protocol error
/// naming the byte offset of the frame boundary.
inline RecordingFile read_recording_frames(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < kRecordingHeader.size() ||
      !std::equal(kRecordingHeader.begin(), kRecordingHeader.end(), data.begin()))
    throw protocol_error("'" + path.string() + "' is not an MBSR1 recording");

  RecordingFile out;
  std::size_t pos = kRecordingHeader.size();
  const std::span<const std::uint8_t> all(data);
  while (pos < data.size()) {
    if (data.size() - pos < wire::kHeaderSize) {
      out.truncated_tail = true;
      break;
    }
    wire::FrameHeader h{};
    try {
      h = wire::parse_header(all.subspan(pos, wire::kHeaderSize));
    } catch (const Error& e) {
      throw protocol_error(std::string(e.what()) + " at byte offset " + std::to_string(pos));
    }
    const std::size_t len = wire::kHeaderSize + h.payload_len;
    if (data.size() - pos < len) {
      out.truncated_tail = true;
      break;
    }
    auto bytes = all.subspan(pos, len);
    RawFrame f{{bytes.begin(), bytes.end()}, {}};
    try {
      f.message = wire::decode(bytes);
    } catch (const Error& e) {
      throw protocol_error(std::string(e.what()) + " in frame at byte offset " + std::to_string(pos));
    }
    out.frames.push_back(std::move(f));
    pos += len;
  }
  return out;
}

/// Streams reconstructed from a message sequence, in registration order.
struct RecordedSession {
  std::vector<StreamData> streams;

  StreamData* find(std::string_view source_id) {
    for (auto& s : streams)
      if (s.info.source_id == source_id) return &s;
    return nullptr;
  }
  const StreamData* find(std::string_view source_id) const {
    return const_cast<RecordedSession*>(this)->find(source_id);
  }
  StreamData* by_id(StreamId id) {
    for (auto& s : streams)
      if (s.info.stream_id == id) return &s;
    return nullptr;
  }

  /// Accepts one decoded message; clock and BYE frames carry no stream data.
  void apply(const wire::Message& m) {
    if (const auto* h = std::get_if<wire::Hello>(&m)) {
      auto info = h->info();
      if (by_id(info.stream_id)) throw protocol_error("duplicate HELLO for stream_id " + std::to_string(info.stream_id));
      streams.push_back({std::move(info), {}});
    } else if (const auto* c = std::get_if<wire::ChunkFrame>(&m)) {
      auto* s = by_id(c->stream_id);
      if (!s) throw protocol_error("CHUNK for unannounced stream_id " + std::to_string(c->stream_id));
      if (c->n_channels != s->info.channel_count) throw protocol_error("CHUNK channel count differs from HELLO");
      s->chunks.push_back(wire::to_chunk(*c));
    } else if (const auto* mk = std::get_if<wire::MarkerFrame>(&m)) {
      auto* s = by_id(mk->stream_id);
      if (!s) throw protocol_error("MARKER for unannounced stream_id " + std::to_string(mk->stream_id));
      Chunk chunk;
      chunk.stream_id = mk->stream_id;
      chunk.channel_count = s->info.channel_count;
      chunk.markers.push_back({mk->timestamp, mk->text});
      s->chunks.push_back(std::move(chunk));
    }
  }
};

inline RecordedSession load_recording(const std::filesystem::path& path) {
  RecordedSession session;
  for (const auto& f : read_recording_frames(path).frames) session.apply(f.message);
  return session;
}

/// Writes HELLO for every stream, then all chunks in the given order, then BYE.
inline void write_recording(const std::filesystem::path& path, const RecordedSession& session) {
  RecordingWriter w(path);
  for (const auto& s : session.streams) w.write(wire::Hello::from(s.info));
  for (const auto& s : session.streams)
    for (const auto& c : s.chunks) w.write_chunk(c);
  w.write(wire::Bye{});
  w.close();
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// One CSV per stream: header row of channel labels, first column the
/// dejittered timestamp. Returns the files written.
inline std::vector<std::filesystem::path> export_csv(const RecordedSession& session, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& s : session.streams) {
    const auto path = dir / (s.info.source_id + ".csv");
    std::ofstream out(path);
    if (!out) throw io_error("cannot write '" + path.string() + "'");
    out.precision(17);
    if (s.info.kind == StreamKind::MARKER) {
      out << "timestamp,text\n";
      for (const auto& m : s.markers()) out << m.timestamp << ',' << csv_escape(m.text) << '\n';
    } else {
      out << "timestamp";
      for (const auto& l : s.info.channel_labels) out << ',' << csv_escape(l);
      out << '\n';
      const auto raw = s.timestamps();
      const auto ts = raw.size() >= 2 ? dejitter_timestamps(raw, s.info.nominal_rate_hz) : raw;
      const auto xs = s.samples();
      const std::size_t ch = s.info.channel_count;
      out.precision(9);
      for (std::size_t i = 0; i < ts.size(); ++i) {
        out << std::setprecision(17) << ts[i] << std::setprecision(9);
        for (std::size_t c = 0; c < ch; ++c) out << ',' << xs[i * ch + c];
        out << '\n';
      }
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace biostream::stream
