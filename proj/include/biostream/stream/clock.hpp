#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "biostream/stream/types.hpp"

namespace biostream::stream {

struct ClockEstimate {
  double offset_s = 0.0;  // remote clock minus local clock
  double rtt_s = 0.0;
};

/// Offset from the exchange with the smallest round-trip time. Queuing delay
/// only ever inflates RTT, so that exchange bounds the estimate error best.
inline ClockEstimate estimate_clock_offset(std::span<const ClockExchange> exchanges) {
  if (exchanges.empty()) throw invalid_argument("estimate_clock_offset: no exchanges");
  const auto best = std::min_element(exchanges.begin(), exchanges.end(),
                                     [](const auto& a, const auto& b) { return a.round_trip() < b.round_trip(); });
  return {best->offset(), best->round_trip()};
}

/// Piecewise-constant offset model: each burst estimate holds from the local
/// time its burst started until the next one. Times before the first burst
/// use the first estimate.
class OffsetTrack {
 public:
  void add(double local_time_s, ClockEstimate estimate) {
    auto it = std::upper_bound(times_.begin(), times_.end(), local_time_s);
    const auto k = it - times_.begin();
    times_.insert(it, local_time_s);
    estimates_.insert(estimates_.begin() + k, estimate);
  }

  bool empty() const { return times_.empty(); }
  std::size_t size() const { return times_.size(); }
  const std::vector<ClockEstimate>& estimates() const { return estimates_; }

  double offset_at(double local_time_s) const {
    if (times_.empty()) return 0.0;
    auto it = std::upper_bound(times_.begin(), times_.end(), local_time_s);
    const auto k = it == times_.begin() ? 0 : (it - times_.begin()) - 1;
    return estimates_[static_cast<std::size_t>(k)].offset_s;
  }

 private:
  std::vector<double> times_;
  std::vector<ClockEstimate> estimates_;
};

inline constexpr std::size_t kDejitterWindow = 500;

/// Replaces jittery timestamps with a least-squares line over sample index,
/// fitted per block of `window` samples (a trailing partial block joins the
/// block before it). Each block keeps its mean. Irregular streams
/// (rate 0) pass through unchanged.
inline std::vector<double> dejitter_timestamps(std::span<const double> timestamps, double nominal_rate_hz,
                                               std::size_t window = kDejitterWindow) {
  std::vector<double> out(timestamps.begin(), timestamps.end());
  if (nominal_rate_hz <= 0.0) return out;
  if (timestamps.size() < 2) throw invalid_argument("dejitter_timestamps: need at least two timestamps");
  if (window < 2) throw invalid_argument("dejitter_timestamps: window must hold at least two samples");

  const std::size_t n = timestamps.size();
  std::size_t begin = 0;
  while (begin < n) {
    std::size_t end = std::min(n, begin + window);
    if (n - end < window) end = n;
    const std::size_t m = end - begin;
    if (m < 2) break;
    // centred index keeps the normal equations well conditioned
    const double xm = static_cast<double>(m - 1) / 2.0;
    double tm = 0.0;
    for (std::size_t i = begin; i < end; ++i) tm += timestamps[i];
    tm /= static_cast<double>(m);
    double sxx = 0.0, sxt = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double x = static_cast<double>(i - begin) - xm;
      sxx += x * x;
      sxt += x * (timestamps[i] - tm);
    }
    const double slope = sxt / sxx;
    for (std::size_t i = begin; i < end; ++i) out[i] = tm + slope * (static_cast<double>(i - begin) - xm);
    begin = end;
  }
  for (std::size_t i = 1; i < n; ++i) out[i] = std::max(out[i], out[i - 1]);
  return out;
}

}  // namespace biostream::stream
