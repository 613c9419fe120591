#pragma once

// Online infomax ICA: batch whitening on an initial window, then
// natural-gradient updates W <- W + eta (I - tanh(y) y^T) W per sample.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biostream/error.hpp"

namespace biostream::ica {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct IcaConfig {
  std::optional<double> initial_rate;  // default 0.04 / n_channels
  double rate_decay_samples = 5000.0;
};

struct IcaState {
  std::size_t n_channels = 0;
  Matrix whitening;  // V
  Matrix unmixing;   // W
  double initial_rate = 0.0;
  double rate_decay_samples = 5000.0;
  std::size_t samples_seen = 0;

  double current_rate() const {
    return initial_rate / (1.0 + static_cast<double>(samples_seen) / rate_decay_samples);
  }
  /// Full separating matrix W V.
  Matrix separating() const { return unmixing * whitening; }
};

inline Matrix sample_covariance(const Matrix& x) {
  const Matrix centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows());
}

/// Whitening from the eigen-decomposition of the buffer covariance
/// (V = D^-1/2 E^T), W = I. `buffer` is [N0 x n] with N0 >= 10 n.
inline IcaState ica_init(const Matrix& buffer, const IcaConfig& config = {}) {
  const auto n = static_cast<std::size_t>(buffer.cols());
  if (n == 0) throw invalid_argument("ica_init: no channels");
  if (static_cast<std::size_t>(buffer.rows()) < 10 * n)
    throw invalid_argument("ica_init: need at least 10 samples per channel");
  if (!buffer.allFinite()) throw invalid_argument("ica_init: non-finite samples in init buffer");

  const Matrix cov = sample_covariance(buffer);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector& d = eig.eigenvalues();
  const double largest = d.maxCoeff();
  const double floor = std::max(largest, 1e-300) * 1e-10;
  std::set<std::size_t> degenerate;
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (d(k) > floor) continue;
    const Vector v = eig.eigenvectors().col(k);
    for (Eigen::Index c = 0; c < v.size(); ++c)
      if (std::abs(v(c)) > 0.1) degenerate.insert(static_cast<std::size_t>(c));
  }
  if (!degenerate.empty()) {
    std::string names;
    for (auto c : degenerate) names += (names.empty() ? "" : ", ") + std::to_string(c);
    throw Error(ErrorCode::numerical, "ica_init: covariance is rank-deficient; degenerate channels: " + names);
  }

  IcaState s;
  s.n_channels = n;
  s.whitening = d.cwiseInverse().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  s.unmixing = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  s.initial_rate = config.initial_rate.value_or(0.04 / static_cast<double>(n));
  s.rate_decay_samples = config.rate_decay_samples;
  return s;
}

/// Natural-gradient infomax over the rows of `chunk` ([m x n]). A chunk with
/// any non-finite value is rejected and leaves the state untouched.
inline void ica_update(IcaState& state, const Matrix& chunk) {
  if (static_cast<std::size_t>(chunk.cols()) != state.n_channels)
    throw invalid_argument("ica_update: channel count mismatch");
  if (!chunk.allFinite()) throw invalid_argument("ica_update: non-finite samples, chunk rejected");
  const auto n = static_cast<Eigen::Index>(state.n_channels);
  const Matrix eye = Matrix::Identity(n, n);
  Matrix grad(n, n);
  for (Eigen::Index r = 0; r < chunk.rows(); ++r) {
    const double eta = state.current_rate();
    ++state.samples_seen;
    if (eta == 0.0) continue;
    const Vector y = state.unmixing * (state.whitening * chunk.row(r).transpose());
    grad.noalias() = eye - y.array().tanh().matrix() * y.transpose();
    state.unmixing += eta * grad * state.unmixing;
  }
}

/// Component activations y = W V x for every row; [m x n].
inline Matrix unmix(const IcaState& state, const Matrix& chunk) {
  if (static_cast<std::size_t>(chunk.cols()) != state.n_channels) throw invalid_argument("unmix: channel count mismatch");
  return chunk * state.separating().transpose();
}

/// Back-projects with the excluded components zeroed: x' = (WV)^-1 Z (WV) x.
inline Matrix reconstruct_excluding(const IcaState& state, const Matrix& chunk, std::span<const std::size_t> excluded) {
  if (static_cast<std::size_t>(chunk.cols()) != state.n_channels)
    throw invalid_argument("reconstruct_excluding: channel count mismatch");
  const Matrix m = state.separating();
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible()) throw Error(ErrorCode::numerical, "reconstruct_excluding: W V is singular");
  Vector keep = Vector::Ones(m.rows());
  for (auto c : excluded) {
    if (c >= state.n_channels) throw invalid_argument("reconstruct_excluding: component index out of range");
    keep(static_cast<Eigen::Index>(c)) = 0.0;
  }
  const Matrix proj = lu.inverse() * keep.asDiagonal() * m;
  return chunk * proj.transpose();
}

/// Amari performance index of P = W V A, in [0, 1]; zero exactly when P is a
/// scaled permutation. Rows of |P| are first divided by their maxima, which
/// makes the score independent of the scale of each row of W. Sums run over
/// sorted terms so that permuting rows or columns gives a bit-identical result.
inline double amari_index(const Matrix& p) {
  const Eigen::Index n = p.rows();
  if (n != p.cols() || n < 2) throw invalid_argument("amari_index: need a square matrix of size >= 2");
  if (!p.allFinite()) throw invalid_argument("amari_index: non-finite entries");
  Matrix a = p.cwiseAbs();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = a.row(i).maxCoeff();
    if (!(m > 0.0)) throw invalid_argument("amari_index: zero row");
    a.row(i) /= m;
  }
  std::vector<double> terms(static_cast<std::size_t>(n));
  const auto ratio_sum = [&](auto line) {
    double mx = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) mx = std::max(mx, line(k));
    for (Eigen::Index k = 0; k < n; ++k) terms[static_cast<std::size_t>(k)] = line(k) / mx;
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s - 1.0;
  };
  std::vector<double> parts;
  for (Eigen::Index i = 0; i < n; ++i) parts.push_back(ratio_sum([&](Eigen::Index k) { return a(i, k); }));
  for (Eigen::Index j = 0; j < n; ++j) parts.push_back(ratio_sum([&](Eigen::Index k) { return a(k, j); }));
  std::sort(parts.begin(), parts.end());
  double total = 0.0;
  for (double v : parts) total += v;
  return total / (2.0 * static_cast<double>(n) * static_cast<double>(n - 1));
}

/// Streaming wrapper: buffers the first `init_samples` rows, initializes from
/// them, then keeps updating.
class OnlineIca {
 public:
  OnlineIca(std::size_t n_channels, std::size_t init_samples, IcaConfig config = {})
      : n_(n_channels), init_samples_(init_samples), config_(config) {
    if (init_samples < 10 * n_channels) throw invalid_argument("OnlineIca: init window shorter than 10 samples per channel");
  }

  void push(const Matrix& chunk) {
    if (state_) {
      ica_update(*state_, chunk);
      return;
    }
    if (!chunk.allFinite()) throw invalid_argument("OnlineIca: non-finite samples, chunk rejected");
    for (Eigen::Index r = 0; r < chunk.rows(); ++r) {
      if (state_) {
        ica_update(*state_, chunk.bottomRows(chunk.rows() - r));
        return;
      }
      pending_.emplace_back(chunk.row(r).transpose());
      if (pending_.size() == init_samples_) {
        Matrix buf(static_cast<Eigen::Index>(init_samples_), static_cast<Eigen::Index>(n_));
        for (std::size_t i = 0; i < pending_.size(); ++i) buf.row(static_cast<Eigen::Index>(i)) = pending_[i].transpose();
        state_ = ica_init(buf, config_);
        ica_update(*state_, buf);
        pending_.clear();
      }
    }
  }

  bool ready() const { return state_.has_value(); }
  const IcaState& state() const { return *state_; }

 private:
  std::size_t n_;
  std::size_t init_samples_;
  IcaConfig config_;
  std::vector<Vector> pending_;
  std::optional<IcaState> state_;
};

}  // namespace biostream::ica
