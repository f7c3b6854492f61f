#pragma once

// Unsupervised mean-difference maximization on bit-locked epochs.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cvep/codegen.hpp"
#include "cvep/covariance.hpp"
#include "cvep/error.hpp"
#include "cvep/outcome.hpp"
#include "cvep/types.hpp"

namespace cvep {

/// K overlapping epochs of C x epoch_len samples, one per stimulus frame,
/// flattened time-major into K x D.
class EpochSet {
 public:
  EpochSet(Matrix epochs, Index channels, Index epoch_len, std::vector<Index> onsets = {})
      : epochs_(std::move(epochs)), channels_(channels), epoch_len_(epoch_len), onsets_(std::move(onsets)) {
    if (epochs_.cols() != channels_ * epoch_len_) {
      throw Error(Errc::ShapeError, "epoch width != channels * epoch_len");
    }
    if (onsets_.empty()) {
      onsets_.resize(static_cast<std::size_t>(epochs_.rows()));
      for (Index k = 0; k < epochs_.rows(); ++k) onsets_[static_cast<std::size_t>(k)] = k;
    }
    if (static_cast<Index>(onsets_.size()) != epochs_.rows()) {
      throw Error(Errc::ShapeError, "one onset frame per epoch required");
    }
  }

  const Matrix& epochs() const { return epochs_; }
  Index size() const { return epochs_.rows(); }
  Index dim() const { return epochs_.cols(); }
  Index channels() const { return channels_; }
  Index epoch_len() const { return epoch_len_; }
  const std::vector<Index>& onsets() const { return onsets_; }

  /// Same statistics as lag_statistics(epochs()), computed from the
  /// continuous trial when the epochs were sliced from one.
  LagStatistics lag_statistics() const {
    if (!source_) return cvep::lag_statistics(epochs_, channels_, epoch_len_);
    return statistics_from_source();
  }

  friend EpochSet slice_epochs(const Trial& trial, Index epoch_len);

 private:
  // Epoch k starts at sample step * k, so lag products of the continuous
  // signal enter once per epoch that contains both samples.
  LagStatistics statistics_from_source() const {
    const Matrix& x = *source_;
    const Index c = channels_, n = epoch_len_, k = size(), len = x.cols();
    LagStatistics st;
    st.channels = c;
    st.epoch_len = n;
    st.n_epochs = static_cast<double>(k);
    st.lag_sums.assign(static_cast<std::size_t>(n), Matrix::Zero(c, c));
    Vector weights(len);
    for (Index l = 0; l < n; ++l) {
      const Index pairs = len - l;
      for (Index s = 0; s < pairs; ++s) {
        // epochs k' with step*k' <= s and s + l <= step*k' + n - 1
        const Index hi = std::min(k - 1, s / step_);
        const Index num = s + l - n + 1;
        const Index lo = num <= 0 ? 0 : (num + step_ - 1) / step_;
        weights(s) = hi >= lo ? static_cast<double>(hi - lo + 1) : 0.0;
      }
      st.lag_sums[static_cast<std::size_t>(l)].noalias() =
          (x.middleCols(l, pairs) * weights.head(pairs).asDiagonal()) * x.leftCols(pairs).transpose();
    }
    Vector cumulative(len + 1);
    cumulative(0) = 0.0;
    for (Index s = 0; s < len; ++s) cumulative(s + 1) = cumulative(s) + x.col(s).squaredNorm();
    for (Index e = 0; e < k; ++e) {
      const double sq = cumulative(e * step_ + n) - cumulative(e * step_);
      st.sum_norm4 += sq * sq;
    }
    return st;
  }

  Matrix epochs_;
  Index channels_;
  Index epoch_len_;
  std::vector<Index> onsets_;
  std::optional<Matrix> source_;
  Index step_ = 1;
};

/// One epoch per frame whose full window lies inside the trial; epoch k
/// covers samples [step*k, step*k + epoch_len).
inline EpochSet slice_epochs(const Trial& trial, Index epoch_len = kResponseLength) {
  if (epoch_len <= 0) throw Error(Errc::InvalidArgument, "epoch length must be positive");
  if (trial.length() < epoch_len) throw Error(Errc::TrialTooShort, "trial shorter than one epoch");
  const Index step = trial.samples_per_frame();
  const Index c = trial.channels();
  const Index k = (trial.length() - epoch_len) / step + 1;
  Matrix epochs(k, c * epoch_len);
  std::vector<Index> onsets(static_cast<std::size_t>(k));
  for (Index e = 0; e < k; ++e) onsets[static_cast<std::size_t>(e)] = e;
  // Feature t*C + c of epoch e is sample (c, step*e + t): a strided column.
  const double* base = trial.samples.data();
  for (Index t = 0; t < epoch_len; ++t) {
    for (Index ch = 0; ch < c; ++ch) {
      epochs.col(t * c + ch) =
          Eigen::Map<const Vector, 0, Eigen::InnerStride<>>(base + t * c + ch, k, Eigen::InnerStride<>(step * c));
    }
  }
  EpochSet out(std::move(epochs), c, epoch_len, std::move(onsets));
  out.source_ = trial.samples.leftCols((k - 1) * step + epoch_len);
  out.step_ = step;
  return out;
}

/// Flash and non-flash class means of the epochs under one code.
struct ClassMeans {
  Vector flash;
  Vector non_flash;

  Vector difference() const { return flash - non_flash; }
};

namespace detail {

// K x N selection weights: column i averages the epochs whose frame bit is
// `value` under code i.
inline Matrix class_weights(const EpochSet& ep, std::span<const BitSequence> codes, std::uint8_t value) {
  Matrix w = Matrix::Zero(ep.size(), static_cast<Index>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) {
    Index count = 0;
    for (Index k = 0; k < ep.size(); ++k) {
      if (codes[i].cyclic(static_cast<std::size_t>(ep.onsets()[static_cast<std::size_t>(k)])) == value) {
        w(k, static_cast<Index>(i)) = 1.0;
        ++count;
      }
    }
    if (count == 0) throw Error(Errc::DegenerateHypothesis, "a code leaves one class without epochs");
    w.col(static_cast<Index>(i)) /= static_cast<double>(count);
  }
  return w;
}

}  // namespace detail

/// D x N flash and non-flash means for every code.
inline std::pair<Matrix, Matrix> class_means(const EpochSet& ep, std::span<const BitSequence> codes) {
  const Matrix plus = ep.epochs().transpose() * detail::class_weights(ep, codes, 1);
  const Matrix minus = ep.epochs().transpose() * detail::class_weights(ep, codes, 0);
  return {plus, minus};
}

inline ClassMeans class_means(const EpochSet& ep, const BitSequence& code) {
  const auto [plus, minus] = class_means(ep, std::span<const BitSequence>(&code, 1));
  return {plus.col(0), minus.col(0)};
}

/// D x N mean flash epoch minus mean non-flash epoch, one column per code.
inline Matrix mean_differences(const EpochSet& ep, std::span<const BitSequence> codes) {
  const Matrix w = detail::class_weights(ep, codes, 1) - detail::class_weights(ep, codes, 0);
  return ep.epochs().transpose() * w;
}

/// Mean flash epoch minus mean non-flash epoch under the code.
inline Vector mean_difference(const EpochSet& ep, const BitSequence& code) {
  return mean_differences(ep, std::span<const BitSequence>(&code, 1)).col(0);
}

inline CovModel estimate_covariance(const EpochSet& ep, std::optional<double> gamma = std::nullopt,
                                    Index taper_len = kResponseLength) {
  if (ep.size() < 2) throw Error(Errc::InsufficientEpochs, "covariance needs at least two epochs");
  return covariance_from_statistics(ep.lag_statistics(), gamma, taper_len);
}

/// Mahalanobis norms d' Sigma^-1 d of each column of `deltas`.
inline DecodeOutcome score_hypotheses(const Matrix& deltas, const CovModel& cov) {
  const Matrix solved = cov.solve(deltas);
  std::vector<double> scores(static_cast<std::size_t>(deltas.cols()));
  for (Index i = 0; i < deltas.cols(); ++i) {
    scores[static_cast<std::size_t>(i)] = deltas.col(i).dot(solved.col(i));
  }
  return make_outcome(std::move(scores));
}

inline DecodeOutcome score_hypotheses(std::span<const Vector> deltas, const CovModel& cov) {
  if (deltas.empty()) throw Error(Errc::InvalidArgument, "no hypotheses");
  Matrix m(deltas.front().size(), static_cast<Index>(deltas.size()));
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (deltas[i].size() != m.rows()) throw Error(Errc::ShapeError, "mean differences differ in length");
    m.col(static_cast<Index>(i)) = deltas[i];
  }
  return score_hypotheses(m, cov);
}

struct UmmConfig {
  Index epoch_len = kResponseLength;
  Index taper_len = kResponseLength;
  std::optional<double> shrinkage;
};

/// Label-free covariance statistics and confidence-weighted class means of
/// previously decoded trials. The means belong to the predicted code, so one
/// pair serves every hypothesis.
struct UmmState {
  Accumulation mode = Accumulation::instantaneous;
  LagStatistics cov_stats;
  Vector flash_sum;      // sum_j c_j * mu_flash_j
  Vector non_flash_sum;  // sum_j c_j * mu_nonflash_j
  double weight_total = 0.0;
  Index n_trials_seen = 0;

  /// Confidence-weighted average of accumulated means; empty when no weight.
  std::optional<ClassMeans> accumulated_means() const {
    if (!(weight_total > 0.0)) return std::nullopt;
    return ClassMeans{flash_sum / weight_total, non_flash_sum / weight_total};
  }
};

/// Scores every code on one epoch set. Cumulative mode pools the covariance
/// statistics and blends each hypothesis' class means with the accumulated
/// means, the current trial weighing one.
/// `own` holds the lag statistics of `ep`.
inline DecodeOutcome decode(const EpochSet& ep, const LagStatistics& own, std::span<const BitSequence> codes,
                            const UmmState& state, const UmmConfig& cfg = {}) {
  if (codes.empty()) throw Error(Errc::InvalidArgument, "no hypotheses");
  const bool cumulative = state.mode == Accumulation::cumulative;
  LagStatistics stats = own;
  if (cumulative) stats.merge(state.cov_stats);
  const CovModel cov = covariance_from_statistics(stats, cfg.shrinkage, cfg.taper_len);

  // Blending both class means with weight W then differencing equals
  // blending the differences.
  Matrix deltas = mean_differences(ep, codes);
  if (cumulative && state.weight_total > 0.0) {
    if (state.flash_sum.size() != deltas.rows()) throw Error(Errc::ShapeError, "accumulated means differ in length");
    deltas = (deltas.colwise() + (state.flash_sum - state.non_flash_sum)) / (state.weight_total + 1.0);
  }
  return score_hypotheses(deltas, cov);
}

inline DecodeOutcome decode(const EpochSet& ep, std::span<const BitSequence> codes, const UmmState& state,
                            const UmmConfig& cfg = {}) {
  return decode(ep, ep.lag_statistics(), codes, state, cfg);
}

inline DecodeOutcome decode(const Trial& trial, std::span<const BitSequence> codes, const UmmState& state,
                            const UmmConfig& cfg = {}) {
  return decode(slice_epochs(trial, cfg.epoch_len), codes, state, cfg);
}

/// Pools the covariance statistics and adds the predicted code's class means
/// with weight outcome.confidence.
inline void update_cumulative(UmmState& state, const EpochSet& ep, const LagStatistics& own,
                              const DecodeOutcome& outcome, std::span<const BitSequence> codes) {
  if (state.mode != Accumulation::cumulative) throw Error(Errc::InvalidArgument, "state is not cumulative");
  if (outcome.label < 0 || static_cast<std::size_t>(outcome.label) >= codes.size()) {
    throw Error(Errc::ShapeError, "predicted label outside the code set");
  }
  if (!state.cov_stats.empty() &&
      (state.cov_stats.channels != ep.channels() || state.cov_stats.epoch_len != ep.epoch_len())) {
    throw Error(Errc::ShapeError, "epochs do not match accumulated dimensions");
  }
  state.cov_stats.merge(own);
  const auto means = class_means(ep, codes[static_cast<std::size_t>(outcome.label)]);
  if (state.flash_sum.size() == 0) {
    state.flash_sum = Vector::Zero(ep.dim());
    state.non_flash_sum = Vector::Zero(ep.dim());
  }
  const double c = std::clamp(outcome.confidence, 0.0, 1.0);
  state.flash_sum += c * means.flash;
  state.non_flash_sum += c * means.non_flash;
  state.weight_total += c;
  ++state.n_trials_seen;
}

inline void update_cumulative(UmmState& state, const EpochSet& ep, const DecodeOutcome& outcome,
                              std::span<const BitSequence> codes) {
  update_cumulative(state, ep, ep.lag_statistics(), outcome, codes);
}

class UmmDecoder {
 public:
  UmmDecoder(std::vector<BitSequence> codes, Accumulation mode, UmmConfig cfg = {})
      : codes_(std::move(codes)), cfg_(cfg) {
    state_.mode = mode;
  }

  Accumulation mode() const { return state_.mode; }
  const UmmState& state() const { return state_; }

  DecodeOutcome decode(const Trial& trial) {
    const Slice& sl = slice(trial);
    return cvep::decode(sl.epochs, sl.stats, codes_, state_, cfg_);
  }

  void learn(const Trial& trial, const DecodeOutcome& outcome) {
    if (state_.mode != Accumulation::cumulative) return;
    const Slice& sl = slice(trial);
    update_cumulative(state_, sl.epochs, sl.stats, outcome, codes_);
  }

  void reset() {
    const auto mode = state_.mode;
    state_ = UmmState{};
    state_.mode = mode;
    last_.reset();
  }

 private:
  struct Slice {
    Matrix samples;
    EpochSet epochs;
    LagStatistics stats;
  };

  // learn() normally follows decode() on the same trial; keep its epochs.
  const Slice& slice(const Trial& trial) {
    if (!last_ || last_->samples.rows() != trial.samples.rows() || last_->samples.cols() != trial.samples.cols() ||
        last_->samples != trial.samples) {
      EpochSet ep = slice_epochs(trial, cfg_.epoch_len);
      LagStatistics st = ep.lag_statistics();
      last_.emplace(Slice{trial.samples, std::move(ep), std::move(st)});
    }
    return *last_;
  }

  std::vector<BitSequence> codes_;
  UmmConfig cfg_;
  UmmState state_;
  std::optional<Slice> last_;
};

}  // namespace cvep
