#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "biostream/sim/config.hpp"

namespace biostream::sim {

struct EegMixture {
  Eigen::MatrixXd channels;  // [N x n], row t = A * sources.row(t)^T
  Eigen::MatrixXd mixing;    // A
  Eigen::MatrixXd sources;   // [N x n]
  std::optional<std::size_t> blink_source;
};

struct EegOptions {
  bool with_blink = false;  // last source becomes a blink burst train
  bool identity_mixing = false;
  double max_condition = 10.0;
};

inline double condition_number(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

/// Unit-variance Laplacian sources mixed by a random matrix, redrawn until
/// its condition number is below the limit.
inline EegMixture synth_eeg_mixture(const SimConfig& config, double duration_s, std::size_t n_sources,
                                    const EegOptions& options = {}) {
  config.validate();
  if (n_sources == 0) throw invalid_argument("synth_eeg_mixture: need at least one source");
  const auto n = static_cast<Eigen::Index>(n_sources);
  const auto len = static_cast<Eigen::Index>(std::floor(std::max(duration_s, 0.0) * config.eeg_rate_hz));
  auto rng = make_rng(config.seed, 0xEE6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double b = 1.0 / std::sqrt(2.0);

  EegMixture out;
  out.sources.resize(len, n);
  for (Eigen::Index t = 0; t < len; ++t)
    for (Eigen::Index k = 0; k < n; ++k) {
      const double u = unit(rng) - 0.5;
      out.sources(t, k) = -b * std::copysign(1.0, u) * std::log(1.0 - 2.0 * std::abs(u));
    }

  if (options.with_blink && len > 0) {
    const Eigen::Index k = n - 1;
    out.blink_source = static_cast<std::size_t>(k);
    std::uniform_real_distribution<double> gap(2.0, 5.0);
    const double fs = config.eeg_rate_hz;
    Eigen::VectorXd blink = Eigen::VectorXd::Zero(len);
    for (double t0 = gap(rng) / 2; t0 < duration_s; t0 += gap(rng)) {
      for (Eigen::Index t = 0; t < len; ++t) {
        const double d = static_cast<double>(t) / fs - t0;
        if (std::abs(d) < 0.6) blink(t) += std::exp(-0.5 * d * d / (0.1 * 0.1));
      }
    }
    const double mean = blink.mean();
    const double sd = std::sqrt((blink.array() - mean).square().mean());
    out.sources.col(k) = sd > 0 ? Eigen::VectorXd((blink.array() - mean) / sd) : blink;
  }

  if (options.identity_mixing) {
    out.mixing = Eigen::MatrixXd::Identity(n, n);
  } else {
    std::normal_distribution<double> g(0.0, 1.0);
    do {
      out.mixing.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out.mixing(i, j) = g(rng);
    } while (!(condition_number(out.mixing) < options.max_condition));
  }
  out.channels = out.sources * out.mixing.transpose();
  return out;
}

}  // namespace biostream::sim
