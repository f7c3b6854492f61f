#pragma once

// Regularized covariance of epoch features: block-Toeplitz estimate with a
// linear lag taper and shrinkage toward a scaled identity, solved with a
// block Levinson recursion. Features are laid out time-major: index t*C + c.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "cvep/error.hpp"
#include "cvep/types.hpp"

namespace cvep {

/// Additive second-moment statistics of a set of epochs.
///
/// lag_sums[l] = sum_k sum_t x_k(t + l) x_k(t)', summed over the epoch_len - l
/// valid time pairs of each epoch.
struct LagStatistics {
  Index channels = 0;
  Index epoch_len = 0;
  std::vector<Matrix> lag_sums;
  double n_epochs = 0.0;
  double sum_norm4 = 0.0;  // sum_k ||x_k||^4

  bool empty() const { return n_epochs == 0.0; }
  Index dim() const { return channels * epoch_len; }

  void merge(const LagStatistics& other) {
    if (other.empty()) return;
    if (empty()) {
      *this = other;
      return;
    }
    if (other.channels != channels || other.epoch_len != epoch_len) {
      throw Error(Errc::ShapeError, "lag statistics of different epoch shapes");
    }
    for (std::size_t l = 0; l < lag_sums.size(); ++l) lag_sums[l] += other.lag_sums[l];
    n_epochs += other.n_epochs;
    sum_norm4 += other.sum_norm4;
  }
};

/// Lag statistics from a K x D matrix of time-major epochs.
inline LagStatistics lag_statistics(const Matrix& epochs, Index channels, Index epoch_len) {
  if (epochs.cols() != channels * epoch_len) {
    throw Error(Errc::ShapeError, "epoch width != channels * epoch_len");
  }
  LagStatistics st;
  st.channels = channels;
  st.epoch_len = epoch_len;
  st.lag_sums.assign(static_cast<std::size_t>(epoch_len), Matrix::Zero(channels, channels));
  st.n_epochs = static_cast<double>(epochs.rows());
  for (Index k = 0; k < epochs.rows(); ++k) {
    const Vector row = epochs.row(k).transpose();
    const Eigen::Map<const Matrix> x(row.data(), channels, epoch_len);  // channel x time
    for (Index l = 0; l < epoch_len; ++l) {
      const Index n = epoch_len - l;
      st.lag_sums[static_cast<std::size_t>(l)].noalias() +=
          x.middleCols(l, n) * x.leftCols(n).transpose();
    }
    const double sq = row.squaredNorm();
    st.sum_norm4 += sq * sq;
  }
  return st;
}

/// Symmetric positive definite covariance of D = C * n_lags features, held
/// either as a dense Cholesky factor or as per-lag C x C blocks.
class CovModel {
 public:
  enum class Structure { dense, block_toeplitz };

  static CovModel from_dense(const Matrix& sigma) {
    if (sigma.rows() != sigma.cols()) throw Error(Errc::ShapeError, "covariance not square");
    CovModel m;
    m.structure_ = Structure::dense;
    m.dense_ = sigma;
    m.llt_.compute(sigma);
    if (m.llt_.info() != Eigen::Success) {
      throw Error(Errc::NumericalFailure, "covariance is not positive definite");
    }
    return m;
  }

  /// blocks[l] = B(l) = E[x(t + l) x(t)'], B(-l) = B(l)'.
  static CovModel from_blocks(std::vector<Matrix> blocks, double gamma = 0.0, Vector taper = {}) {
    if (blocks.empty()) throw Error(Errc::ShapeError, "no covariance blocks");
    CovModel m;
    m.structure_ = Structure::block_toeplitz;
    m.blocks_ = std::move(blocks);
    m.gamma_ = gamma;
    m.taper_ = std::move(taper);
    m.prepare_levinson();
    return m;
  }

  Structure structure() const { return structure_; }
  Index channels() const { return structure_ == Structure::dense ? 1 : blocks_.front().rows(); }
  Index n_lags() const { return structure_ == Structure::dense ? dense_.rows() : static_cast<Index>(blocks_.size()); }
  Index dim() const { return structure_ == Structure::dense ? dense_.rows() : channels() * n_lags(); }
  const std::vector<Matrix>& blocks() const { return blocks_; }
  double shrinkage_gamma() const { return gamma_; }
  const Vector& taper() const { return taper_; }

  Matrix dense() const {
    if (structure_ == Structure::dense) return dense_;
    const Index c = channels(), n = n_lags();
    Matrix out(c * n, c * n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        out.block(i * c, j * c, c, c) = (i >= j) ? blocks_[static_cast<std::size_t>(i - j)]
                                                 : Matrix(blocks_[static_cast<std::size_t>(j - i)].transpose());
      }
    }
    return out;
  }

  /// Sigma^-1 * rhs for a D x m right-hand side.
  Matrix solve(const Matrix& rhs) const {
    if (rhs.rows() != dim()) throw Error(Errc::ShapeError, "right-hand side length != dimension");
    if (structure_ == Structure::dense) return llt_.solve(rhs);
    return levinson_solve(rhs);
  }

  Vector solve(const Vector& v) const { return solve(Matrix(v)).col(0); }

 private:
  // Backward solutions G_k of T_k G_k = [0 ... 0 I]' for every leading
  // block size k+1, built by the block Levinson (Whittle) recursion.
  void prepare_levinson() {
    const Index c = blocks_.front().rows();
    const Index n = static_cast<Index>(blocks_.size());
    const Matrix eye = Matrix::Identity(c, c);
    for (const auto& b : blocks_) {
      if (b.rows() != c || b.cols() != c) throw Error(Errc::ShapeError, "blocks must be C x C");
    }
    Eigen::LLT<Matrix> b0(blocks_[0]);
    if (b0.info() != Eigen::Success) throw Error(Errc::NumericalFailure, "lag-0 block not positive definite");
    Matrix f = b0.solve(eye);  // (k+1)c x c
    Matrix g = f;
    backward_.clear();
    backward_.push_back(g);
    for (Index k = 0; k + 1 < n; ++k) {
      Matrix ef = Matrix::Zero(c, c);
      Matrix eb = Matrix::Zero(c, c);
      for (Index j = 0; j <= k; ++j) {
        ef.noalias() += blocks_[static_cast<std::size_t>(k + 1 - j)] * f.middleRows(j * c, c);
        eb.noalias() += blocks_[static_cast<std::size_t>(j + 1)].transpose() * g.middleRows(j * c, c);
      }
      Eigen::PartialPivLU<Matrix> lu_a(eye - eb * ef);
      Eigen::PartialPivLU<Matrix> lu_d(eye - ef * eb);
      const Matrix alpha = lu_a.inverse();
      const Matrix delta = lu_d.inverse();
      if (!alpha.allFinite() || !delta.allFinite()) {
        throw Error(Errc::NumericalFailure, "block Levinson recursion broke down");
      }
      Matrix f_next = Matrix::Zero((k + 2) * c, c);
      Matrix g_next = Matrix::Zero((k + 2) * c, c);
      f_next.topRows((k + 1) * c) = f * alpha;
      f_next.bottomRows((k + 1) * c).noalias() -= g * (ef * alpha);
      g_next.bottomRows((k + 1) * c) = g * delta;
      g_next.topRows((k + 1) * c).noalias() -= f * (eb * delta);
      // The last block of G is the inverse of a backward error covariance.
      const Matrix tail = g_next.bottomRows(c);
      Eigen::LLT<Matrix> check(0.5 * (tail + tail.transpose()));
      if (check.info() != Eigen::Success) {
        throw Error(Errc::NumericalFailure, "block-Toeplitz covariance is not positive definite");
      }
      f = std::move(f_next);
      g = std::move(g_next);
      backward_.push_back(g);
    }
  }

  Matrix levinson_solve(const Matrix& rhs) const {
    const Index c = channels();
    const Index n = n_lags();
    const Index m = rhs.cols();
    Matrix x = Matrix::Zero(n * c, m);
    x.topRows(c) = backward_[0] * rhs.topRows(c);
    for (Index k = 0; k + 1 < n; ++k) {
      Matrix theta = Matrix::Zero(c, m);
      for (Index j = 0; j <= k; ++j) {
        theta.noalias() += blocks_[static_cast<std::size_t>(k + 1 - j)] * x.middleRows(j * c, c);
      }
      const Matrix resid = rhs.middleRows((k + 1) * c, c) - theta;
      x.topRows((k + 2) * c).noalias() += backward_[static_cast<std::size_t>(k + 1)] * resid;
    }
    return x;
  }

  Structure structure_ = Structure::dense;
  Matrix dense_;
  Eigen::LLT<Matrix> llt_;
  std::vector<Matrix> blocks_;
  std::vector<Matrix> backward_;
  double gamma_ = 0.0;
  Vector taper_;
};

/// Linear taper 1 - l / taper_len, zero from taper_len on.
inline Vector linear_taper(Index n_lags, Index taper_len) {
  Vector t(n_lags);
  for (Index l = 0; l < n_lags; ++l) {
    t(l) = std::max(0.0, 1.0 - static_cast<double>(l) / static_cast<double>(taper_len));
  }
  return t;
}

/// Tapered block-Toeplitz estimate shrunk toward nu * I, nu the mean
/// variance. Without an explicit gamma the intensity is the Ledoit-Wolf ratio
/// computed against the structured estimate.
inline CovModel covariance_from_statistics(const LagStatistics& st, std::optional<double> gamma = std::nullopt,
                                           Index taper_len = kResponseLength) {
  if (st.n_epochs < 2.0) throw Error(Errc::InsufficientEpochs, "covariance needs at least two epochs");
  if (taper_len <= 0) throw Error(Errc::InvalidArgument, "taper length must be positive");
  if (gamma && !(*gamma >= 0.0 && *gamma <= 1.0)) {
    throw Error(Errc::InvalidArgument, "shrinkage must lie in [0, 1]");
  }
  const Index c = st.channels;
  const Index n = st.epoch_len;
  const double k = st.n_epochs;
  const double d = static_cast<double>(c * n);
  const Vector taper = linear_taper(n, taper_len);

  std::vector<Matrix> tapered(static_cast<std::size_t>(n));
  for (Index l = 0; l < n; ++l) {
    tapered[static_cast<std::size_t>(l)] =
        st.lag_sums[static_cast<std::size_t>(l)] * (taper(l) / (k * static_cast<double>(n - l)));
  }
  const double nu = tapered[0].trace() / static_cast<double>(c);
  if (!(nu > 0.0) || !std::isfinite(nu)) {
    throw Error(Errc::NumericalFailure, "epochs have zero or non-finite variance");
  }

  double g = 0.0;
  if (gamma) {
    g = *gamma;
  } else {
    // ||S_T||_F^2 and <S_T, sum_k x_k x_k'> via the lag structure.
    double norm2 = 0.0, inner = 0.0;
    for (Index l = 0; l < n; ++l) {
      const auto& b = tapered[static_cast<std::size_t>(l)];
      const double mult = (l == 0) ? 1.0 : 2.0;
      norm2 += mult * static_cast<double>(n - l) * b.squaredNorm();
      inner += mult * b.cwiseProduct(st.lag_sums[static_cast<std::size_t>(l)]).sum();
    }
    const double delta2 = norm2 - nu * nu * d;
    const double beta2 = std::max(0.0, (st.sum_norm4 - 2.0 * inner + k * norm2) / (k * k));
    g = (delta2 > 0.0) ? std::clamp(beta2 / delta2, 0.0, 1.0) : 1.0;
  }

  std::vector<Matrix> blocks(static_cast<std::size_t>(n));
  for (Index l = 0; l < n; ++l) blocks[static_cast<std::size_t>(l)] = (1.0 - g) * tapered[static_cast<std::size_t>(l)];
  blocks[0].diagonal().array() += g * nu;
  return CovModel::from_blocks(std::move(blocks), g, taper);
}

}  // namespace cvep
