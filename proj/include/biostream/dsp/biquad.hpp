#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "biostream/error.hpp"

namespace biostream::dsp {

/// One second-order section, H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2),
/// run in transposed direct form II.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
  double s1 = 0.0, s2 = 0.0;

  double step(double x) {
    const double y = b0 * x + s1;
    s1 = b1 * x - a1 * y + s2;
    s2 = b2 * x - a2 * y;
    return y;
  }

  std::complex<double> response(std::complex<double> z_inv) const {
    return (b0 + z_inv * (b1 + z_inv * b2)) / (1.0 + z_inv * (a1 + z_inv * a2));
  }

  /// Both poles strictly inside the unit circle (Jury conditions).
  bool stable() const { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double sample_rate_hz = 0.0;

  std::complex<double> response(double freq_hz) const {
    const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
    const auto z_inv = std::polar(1.0, -w);
    std::complex<double> h = 1.0;
    for (const auto& s : sections) h *= s.response(z_inv);
    return h;
  }
  double magnitude(double freq_hz) const { return std::abs(response(freq_hz)); }
  double magnitude_db(double freq_hz) const { return 20.0 * std::log10(magnitude(freq_hz)); }

  void reset() {
    for (auto& s : sections) s.s1 = s.s2 = 0.0;
  }
};

/// Butterworth band-pass of the given prototype order (2*order poles,
/// `order` sections). Band edges are pre-warped so the digital response is
/// exactly -3 dB at `low_hz` and `high_hz`; each section has zeros at DC and
/// Nyquist and unit gain at the geometric centre.
inline BiquadCascade design_bandpass(double low_hz, double high_hz, int order, double sample_rate_hz) {
  if (order < 1) throw invalid_argument("design_bandpass: order must be >= 1");
  if (!(sample_rate_hz > 0.0) || !(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < sample_rate_hz / 2.0))
    throw invalid_argument("design_bandpass: need 0 < low < high < fs/2");

  using cd = std::complex<double>;
  const double pi = std::numbers::pi;
  const double k = 2.0 * sample_rate_hz;
  const double wl = k * std::tan(pi * low_hz / sample_rate_hz);
  const double wh = k * std::tan(pi * high_hz / sample_rate_hz);
  const double w0 = std::sqrt(wl * wh);
  const double bw = wh - wl;

  // analog prototype poles -> band-pass poles -> z plane
  std::vector<cd> upper;  // one representative per conjugate pair
  std::vector<double> real_poles;
  for (int i = 1; i <= order; ++i) {
    const cd p = std::polar(1.0, pi * (2.0 * i + order - 1) / (2.0 * order));
    const cd pb = p * bw;
    const cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
    for (const cd s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
      const cd z = (k + s) / (k - s);
      if (std::abs(z.imag()) > 1e-12 * std::abs(z)) {
        if (z.imag() > 0.0) upper.push_back(z);
      } else {
        real_poles.push_back(z.real());
      }
    }
  }
  if (real_poles.size() % 2 != 0) throw Error(ErrorCode::numerical, "design_bandpass: unpaired real pole");

  BiquadCascade cascade;
  cascade.sample_rate_hz = sample_rate_hz;
  const auto add_section = [&](double a1, double a2) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    s.a1 = a1;
    s.a2 = a2;
    cascade.sections.push_back(s);
  };
  for (const auto& z : upper) add_section(-2.0 * z.real(), std::norm(z));
  for (std::size_t i = 0; i < real_poles.size(); i += 2)
    add_section(-(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]);

  const double f0 = sample_rate_hz / pi * std::atan(w0 / k);
  const auto z_inv = std::polar(1.0, -2.0 * pi * f0 / sample_rate_hz);
  for (auto& s : cascade.sections) {
    if (!s.stable()) throw Error(ErrorCode::numerical, "design_bandpass: unstable section");
    const double g = 1.0 / std::abs(s.response(z_inv));
    s.b0 *= g;
    s.b2 *= g;
  }
  return cascade;
}

/// Causal streaming filter; section state carries over between calls.
inline std::vector<double> filter_apply(BiquadCascade& cascade, std::span<const double> samples) {
  std::vector<double> out(samples.begin(), samples.end());
  for (auto& s : cascade.sections)
    for (auto& x : out) x = s.step(x);
  return out;
}

}  // namespace biostream::dsp
