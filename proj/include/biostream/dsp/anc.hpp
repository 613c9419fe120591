#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "biostream/error.hpp"

namespace biostream::dsp {

struct AncConfig {
  std::size_t taps = 32;             // per reference channel
  double step = 0.01;                // steady-state normalized step
  double initial_step = 0.2;         // step at the first sample
  double step_decay_samples = 500.0; // e-folding time of the step schedule
  double regularizer = 1.0;          // floor on reference power (units of ref^2 summed over taps)
};

/// Multi-reference normalized-LMS canceller. The step follows
/// mu(n) = step + (initial_step - step) * exp(-n / step_decay_samples),
/// so initial_step == step gives plain NLMS.
class AncState {
 public:
  AncState(std::size_t n_refs, AncConfig config = {}) : config_(config), n_refs_(n_refs) {
    if (n_refs == 0 || config.taps == 0) throw invalid_argument("AncState: need at least one reference and one tap");
    if (config.step < 0.0 || config.step >= 2.0 || config.initial_step < 0.0 || config.initial_step >= 2.0)
      throw invalid_argument("AncState: step must lie in [0, 2)");
    if (!(config.regularizer > 0.0)) throw invalid_argument("AncState: regularizer must be positive");
    weights_.assign(n_refs * config.taps, 0.0);
    history_.assign(n_refs * config.taps, 0.0);
  }

  const AncConfig& config() const { return config_; }
  std::size_t reference_count() const { return n_refs_; }
  std::size_t samples_seen() const { return seen_; }
  /// Row-major [n_refs x taps]; tap j multiplies x_k(n - j).
  std::span<const double> weights() const { return weights_; }

  double current_step() const {
    const auto& c = config_;
    if (c.step_decay_samples <= 0.0) return c.step;
    return c.step + (c.initial_step - c.step) * std::exp(-static_cast<double>(seen_) / c.step_decay_samples);
  }

  /// One sample: returns the error e(n) = d(n) - w . x(n).
  double step(double primary, std::span<const double> refs) {
    const std::size_t L = config_.taps;
    const std::size_t slot = head_;
    for (std::size_t k = 0; k < n_refs_; ++k) history_[k * L + slot] = refs[k];

    double y = 0.0;
    double power = 0.0;
    for (std::size_t k = 0; k < n_refs_; ++k) {
      const double* w = &weights_[k * L];
      const double* h = &history_[k * L];
      for (std::size_t j = 0; j < L; ++j) {
        const double x = h[(slot + L - j) % L];
        y += w[j] * x;
        power += x * x;
      }
    }
    const double e = primary - y;
    const double mu = current_step();
    if (mu != 0.0) {
      const double g = mu / (config_.regularizer + power) * e;
      for (std::size_t k = 0; k < n_refs_; ++k) {
        double* w = &weights_[k * L];
        const double* h = &history_[k * L];
        for (std::size_t j = 0; j < L; ++j) w[j] += g * h[(slot + L - j) % L];
      }
    }
    head_ = (head_ + 1) % L;
    ++seen_;
    return e;
  }

 private:
  AncConfig config_;
  std::size_t n_refs_;
  std::vector<double> weights_;
  std::vector<double> history_;  // ring buffers, one row per reference
  std::size_t head_ = 0;
  std::size_t seen_ = 0;
};

/// Cleans `primary` against the time-aligned reference matrix (row-major
/// [n x n_refs]); returns the error signal. State persists across calls.
inline std::vector<double> anc_cancel(std::span<const double> primary, std::span<const double> references,
                                      AncState& state) {
  const std::size_t r = state.reference_count();
  if (references.size() != primary.size() * r)
    throw invalid_argument("anc_cancel: reference length does not match primary");
  std::vector<double> out(primary.size());
  for (std::size_t n = 0; n < primary.size(); ++n) out[n] = state.step(primary[n], references.subspan(n * r, r));
  for (double w : state.weights())
    if (!std::isfinite(w)) throw Error(ErrorCode::numerical, "anc_cancel: weights diverged");
  return out;
}

}  // namespace biostream::dsp
