#pragma once

// Session configuration: one versioned JSON document naming the sources, the
// processing graph, output paths and the dashboard bridge settings.
// Everything is checked in load_config before any command touches the world.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "biostream/error.hpp"
#include "biostream/ica/scalp.hpp"
#include "biostream/sim/sensors.hpp"

namespace biostream::app {

inline constexpr int kConfigVersion = 1;

enum class SourceType { sim, tcp };

struct TcpSourceConfig {
  std::string host = "127.0.0.1";
  unsigned short port = 0;
  /// source_ids the device is expected to announce; stage inputs are checked
  /// against these before connecting.
  std::vector<std::string> streams;
};

struct SourceConfig {
  SourceType type = SourceType::sim;
  sim::SimSource sim;
  bool sim_seed_given = false;
  TcpSourceConfig tcp;
};

inline const std::set<std::string>& stage_names() {
  static const std::set<std::string> names{"identity", "dejitter", "bandpass", "anc", "peaks", "ica", "gaze_map"};
  return names;
}

struct StageConfig {
  std::string stage;
  std::string input;
  std::string output;              // defaults to input + "-proc"
  std::optional<std::string> reference;  // anc: accelerometer stream
  std::optional<std::string> calibration_from;  // gaze_map: marker stream with calib_point markers
  nlohmann::json params = nlohmann::json::object();
};

struct DashboardConfig {
  unsigned short port = 8765;
  double max_points_per_s = 50.0;
  /// EEG stream whose online ICA feeds scalp maps; empty disables them.
  std::string scalp_source;
  double scalp_period_s = 2.0;
  std::size_t scalp_resolution = 32;
  double ica_init_s = 10.0;
};

struct OutputConfig {
  std::filesystem::path dir = ".";
  std::string recording = "session.mbr";
  std::filesystem::path recording_path() const { return dir / recording; }
};

struct SessionConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 1;
  double duration_s = 10.0;
  std::vector<SourceConfig> sources;
  std::vector<StageConfig> processing;
  OutputConfig output;
  DashboardConfig dashboard;
  /// Channel label -> position inside the unit head disc.
  std::map<std::string, ica::Point2> montage;

  /// Every source_id a source promises to deliver, in declaration order.
  std::vector<std::string> declared_streams() const {
    std::vector<std::string> out;
    for (const auto& s : sources) {
      if (s.type == SourceType::sim) {
        for (const auto& st : s.sim.streams) out.push_back(st.source_id);
      } else {
        out.insert(out.end(), s.tcp.streams.begin(), s.tcp.streams.end());
      }
    }
    return out;
  }

  /// Sets the session seed; sim sources without their own seed follow it.
  void apply_seed(std::uint64_t s) {
    seed = s;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      auto& src = sources[i];
      if (src.type != SourceType::sim || src.sim_seed_given) continue;
      src.sim.sim.seed = s + i;
      src.sim.link.seed = s * 7919 + i;
    }
  }
};

namespace detail {

inline SourceConfig parse_source(const nlohmann::json& j, double duration_s) {
  SourceConfig s;
  const auto type = j.value("type", std::string("sim"));
  if (type == "sim") {
    s.type = SourceType::sim;
    auto& src = s.sim;
    if (j.contains("sim")) {
      src.sim = j.at("sim").get<sim::SimConfig>();
      s.sim_seed_given = j.at("sim").contains("seed");
    }
    src.activity = sim::activity_from_string(j.value("activity", std::string("rest")));
    src.duration_s = j.value("duration_s", duration_s);
    src.chunk_s = j.value("chunk_s", src.chunk_s);
    if (j.contains("link")) src.link = j.at("link").get<sim::LinkModel>();
    if (j.contains("scanpath")) src.scanpath = j.at("scanpath").get<sim::GazeScanpath>();
    src.streams = j.at("streams").get<std::vector<sim::SimStreamSpec>>();
    if (src.streams.empty()) throw config_error("sim source declares no streams");
    src.sim.validate();
    if (!(src.duration_s >= 0.0)) throw config_error("sim source: duration_s must be non-negative");
    if (!(src.chunk_s > 0.0)) throw config_error("sim source: chunk_s must be positive");
    for (const auto& st : src.streams) (void)sim::stream_info(src, st);
  } else if (type == "tcp") {
    s.type = SourceType::tcp;
    s.tcp.host = j.value("host", s.tcp.host);
    const int port = j.at("port").get<int>();
    if (port <= 0 || port > 65535) throw config_error("tcp source: port out of range");
    s.tcp.port = static_cast<unsigned short>(port);
    s.tcp.streams = j.value("streams", std::vector<std::string>{});
    if (s.tcp.streams.empty()) throw config_error("tcp source must list the source_ids it provides");
  } else {
    throw config_error("unknown source type '" + type + "'");
  }
  return s;
}

inline StageConfig parse_stage(const nlohmann::json& j) {
  StageConfig st;
  st.stage = j.at("stage").get<std::string>();
  if (!stage_names().contains(st.stage)) throw config_error("unknown stage '" + st.stage + "'");
  st.input = j.at("input").get<std::string>();
  st.output = j.value("output", st.input + "-proc");
  if (j.contains("reference")) st.reference = j.at("reference").get<std::string>();
  if (j.contains("calibration_from")) st.calibration_from = j.at("calibration_from").get<std::string>();
  st.params = j.value("params", nlohmann::json::object());
  if (!st.params.is_object()) throw config_error("stage '" + st.stage + "': params must be an object");
  if (st.stage == "anc" && !st.reference) throw config_error("anc stage on '" + st.input + "' needs a reference stream");
  if (st.stage == "gaze_map" && !st.calibration_from && !st.params.contains("calibration"))
    throw config_error("gaze_map stage needs calibration_from or params.calibration");
  return st;
}

}  // namespace detail

/// Checks that every stage reads streams that exist by the time it runs:
/// declared by a source, present in the input file, or produced by an
/// earlier stage. Output names must be fresh.
inline void validate_graph(const std::vector<StageConfig>& stages, const std::vector<std::string>& available) {
  std::set<std::string> known(available.begin(), available.end());
  for (const auto& st : stages) {
    const auto need = [&](const std::string& id, const char* role) {
      if (!known.contains(id))
        throw config_error("stage '" + st.stage + "' " + role + " '" + id + "' is not a declared stream");
    };
    need(st.input, "input");
    if (st.reference) need(*st.reference, "reference");
    if (st.calibration_from) need(*st.calibration_from, "calibration_from");
    if (st.output.empty()) throw config_error("stage '" + st.stage + "': empty output name");
    if (!known.insert(st.output).second)
      throw config_error("stage '" + st.stage + "' output '" + st.output + "' collides with an existing stream");
  }
}

inline SessionConfig parse_config(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw config_error("config must be a JSON object");
    SessionConfig c;
    if (!j.contains("version")) throw config_error("config lacks \"version\"");
    c.version = j.at("version").get<int>();
    if (c.version != kConfigVersion)
      throw config_error("unsupported config version " + std::to_string(c.version) + " (expected 1)");
    c.duration_s = j.value("duration_s", c.duration_s);
    if (!(c.duration_s >= 0.0)) throw config_error("duration_s must be non-negative");
    for (const auto& s : j.value("sources", nlohmann::json::array())) c.sources.push_back(detail::parse_source(s, c.duration_s));
    for (const auto& s : j.value("processing", nlohmann::json::array())) c.processing.push_back(detail::parse_stage(s));
    if (j.contains("output")) {
      const auto& o = j.at("output");
      c.output.dir = o.value("dir", std::string("."));
      c.output.recording = o.value("recording", c.output.recording);
    }
    if (j.contains("dashboard")) {
      const auto& d = j.at("dashboard");
      const int port = d.value("port", int{c.dashboard.port});
      if (port < 0 || port > 65535) throw config_error("dashboard port out of range");
      c.dashboard.port = static_cast<unsigned short>(port);
      c.dashboard.max_points_per_s = d.value("max_points_per_s", c.dashboard.max_points_per_s);
      if (!(c.dashboard.max_points_per_s > 0.0)) throw config_error("dashboard max_points_per_s must be positive");
      c.dashboard.scalp_source = d.value("scalp_source", std::string());
      c.dashboard.scalp_period_s = d.value("scalp_period_s", c.dashboard.scalp_period_s);
      c.dashboard.scalp_resolution = d.value("scalp_resolution", c.dashboard.scalp_resolution);
      c.dashboard.ica_init_s = d.value("ica_init_s", c.dashboard.ica_init_s);
    }
    if (j.contains("montage")) {
      for (const auto& [label, pos] : j.at("montage").items()) {
        const auto xy = pos.get<std::array<double, 2>>();
        if (xy[0] * xy[0] + xy[1] * xy[1] > 1.0 + 1e-9)
          throw config_error("montage position of '" + label + "' lies outside the unit disc");
        c.montage[label] = {xy[0], xy[1]};
      }
    }
    c.apply_seed(j.value("seed", c.seed));
    std::set<std::string> ids;
    for (const auto& id : c.declared_streams())
      if (!ids.insert(id).second) throw config_error("source_id '" + id + "' is declared twice");
    if (!c.dashboard.scalp_source.empty() && !ids.contains(c.dashboard.scalp_source))
      throw config_error("dashboard scalp_source '" + c.dashboard.scalp_source + "' is not a declared stream");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    throw config_error(std::string("config: ") + e.what());
  }
}

inline SessionConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace biostream::app
