#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <json.hpp>

#include "biostream/error.hpp"

namespace biostream::eval {

enum class ErrorSign { ppg_minus_ecg, ecg_minus_ppg };

/// err_i = 100 * (ppg_i - ecg_i) / mean(ppg), in percent (sign per convention).
inline std::vector<double> normalized_error(std::span<const double> hr_ppg, std::span<const double> hr_ecg,
                                            ErrorSign sign = ErrorSign::ppg_minus_ecg) {
  if (hr_ppg.size() != hr_ecg.size()) throw invalid_argument("normalized_error: window counts differ");
  if (hr_ppg.empty()) return {};
  double mean = 0.0;
  for (double v : hr_ppg) mean += v;
  mean /= static_cast<double>(hr_ppg.size());
  if (!(mean > 0.0)) throw invalid_argument("normalized_error: mean PPG heart rate must be positive");
  std::vector<double> out(hr_ppg.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double diff = sign == ErrorSign::ppg_minus_ecg ? hr_ppg[i] - hr_ecg[i] : hr_ecg[i] - hr_ppg[i];
    out[i] = 100.0 * diff / mean;
  }
  return out;
}

struct BlandAltmanPoint {
  double mean = 0.0;
  double difference = 0.0;
};

struct BlandAltmanReport {
  std::vector<BlandAltmanPoint> points;
  double bias = 0.0;
  double sd = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
};

inline constexpr double kLimitsOfAgreementZ = 1.96;

/// Differences a - b against pairwise means; sd is the sample (n-1) deviation.
inline BlandAltmanReport bland_altman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw invalid_argument("bland_altman: series lengths differ");
  if (a.size() < 2) throw invalid_argument("bland_altman: need at least two pairs");
  BlandAltmanReport r;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    r.points.push_back({(a[i] + b[i]) / 2.0, a[i] - b[i]});
    r.bias += a[i] - b[i];
  }
  r.bias /= n;
  double ss = 0.0;
  for (const auto& p : r.points) ss += (p.difference - r.bias) * (p.difference - r.bias);
  r.sd = std::sqrt(ss / (n - 1.0));
  r.loa_low = r.bias - kLimitsOfAgreementZ * r.sd;
  r.loa_high = r.bias + kLimitsOfAgreementZ * r.sd;
  return r;
}

inline void to_json(nlohmann::json& j, const BlandAltmanReport& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) pts.push_back({{"mean", p.mean}, {"difference", p.difference}});
  j = {{"bias", r.bias}, {"sd", r.sd}, {"loa_low", r.loa_low}, {"loa_high", r.loa_high}, {"points", std::move(pts)}};
}

}  // namespace biostream::eval
