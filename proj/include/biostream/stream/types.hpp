#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "biostream/error.hpp"

namespace biostream::stream {

enum class StreamKind : std::uint8_t { EEG, PPG, ACC, GAZE, GSR, ECG, MARKER };

inline std::string_view to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::EEG: return "EEG";
    case StreamKind::PPG: return "PPG";
    case StreamKind::ACC: return "ACC";
    case StreamKind::GAZE: return "GAZE";
    case StreamKind::GSR: return "GSR";
    case StreamKind::ECG: return "ECG";
    case StreamKind::MARKER: return "MARKER";
  }
  return "?";
}

inline StreamKind kind_from_string(std::string_view s) {
  for (auto k : {StreamKind::EEG, StreamKind::PPG, StreamKind::ACC, StreamKind::GAZE,
                 StreamKind::GSR, StreamKind::ECG, StreamKind::MARKER}) {
    if (to_string(k) == s) return k;
  }
  throw invalid_argument("unknown stream kind '" + std::string(s) + "'");
}

using StreamId = std::uint16_t;

struct StreamInfo {
  std::string name;
  StreamKind kind = StreamKind::EEG;
  std::uint32_t channel_count = 1;
  double nominal_rate_hz = 0.0;  // 0 only for MARKER streams
  std::vector<std::string> channel_labels;
  std::vector<std::string> units;
  std::string source_id;
  StreamId stream_id = 0;

  bool irregular() const { return nominal_rate_hz == 0.0; }

  friend bool operator==(const StreamInfo&, const StreamInfo&) = default;
};

/// Throws if the descriptor violates its invariants.
inline void validate(const StreamInfo& info) {
  if (info.channel_count == 0) throw invalid_argument("stream '" + info.source_id + "': channel_count must be positive");
  if (info.channel_labels.size() != info.channel_count)
    throw invalid_argument("stream '" + info.source_id + "': channel_labels length differs from channel_count");
  if (!info.units.empty() && info.units.size() != info.channel_count)
    throw invalid_argument("stream '" + info.source_id + "': units length differs from channel_count");
  if (info.nominal_rate_hz < 0.0) throw invalid_argument("stream '" + info.source_id + "': negative nominal rate");
  if ((info.nominal_rate_hz == 0.0) != (info.kind == StreamKind::MARKER))
    throw invalid_argument("stream '" + info.source_id + "': nominal rate must be 0 exactly for MARKER streams");
  if (info.source_id.empty()) throw invalid_argument("stream source_id must not be empty");
}

inline void to_json(nlohmann::json& j, const StreamInfo& s) {
  j = nlohmann::json{{"name", s.name},
                     {"kind", std::string(to_string(s.kind))},
                     {"channel_count", s.channel_count},
                     {"nominal_rate_hz", s.nominal_rate_hz},
                     {"channel_labels", s.channel_labels},
                     {"units", s.units},
                     {"source_id", s.source_id},
                     {"stream_id", s.stream_id}};
}

inline void from_json(const nlohmann::json& j, StreamInfo& s) {
  s.name = j.at("name").get<std::string>();
  s.kind = kind_from_string(j.at("kind").get<std::string>());
  s.channel_count = j.at("channel_count").get<std::uint32_t>();
  s.nominal_rate_hz = j.at("nominal_rate_hz").get<double>();
  s.channel_labels = j.at("channel_labels").get<std::vector<std::string>>();
  s.units = j.value("units", std::vector<std::string>{});
  s.source_id = j.at("source_id").get<std::string>();
  s.stream_id = j.value("stream_id", StreamId{0});
}

struct Marker {
  double timestamp = 0.0;
  std::string text;

  friend bool operator==(const Marker&, const Marker&) = default;
};

/// Time-stamped block of samples from one stream. `samples` is row-major
/// [timestamps.size() x channel_count]. Marker chunks carry `markers` only.
struct Chunk {
  StreamId stream_id = 0;
  std::uint32_t channel_count = 0;
  std::vector<double> timestamps;
  std::vector<float> samples;
  std::vector<Marker> markers;

  std::size_t size() const { return timestamps.size(); }
  float at(std::size_t row, std::size_t ch) const { return samples[row * channel_count + ch]; }
  bool is_marker() const { return !markers.empty(); }

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Non-decreasing timestamps, matching sample count; throws rejected_chunk otherwise.
inline void validate(const Chunk& chunk) {
  const auto reject = [](const std::string& why) { return Error(ErrorCode::rejected_chunk, "chunk rejected: " + why); };
  if (chunk.is_marker()) {
    for (std::size_t i = 1; i < chunk.markers.size(); ++i)
      if (chunk.markers[i].timestamp < chunk.markers[i - 1].timestamp) throw reject("marker timestamps decrease");
    return;
  }
  for (std::size_t i = 1; i < chunk.timestamps.size(); ++i)
    if (!(chunk.timestamps[i] >= chunk.timestamps[i - 1])) throw reject("timestamps are not monotone");
  if (chunk.samples.size() != chunk.timestamps.size() * chunk.channel_count)
    throw reject("sample rows do not match timestamp count");
}

/// One NTP-style request/response: local send t0, remote receive t1,
/// remote send t2, local receive t3.
struct ClockExchange {
  double t0 = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;

  double round_trip() const { return (t3 - t0) - (t2 - t1); }
  double offset() const { return ((t1 - t0) + (t2 - t3)) / 2.0; }
};

}  // namespace biostream::stream
