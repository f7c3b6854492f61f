#pragma once

// Reconvolution CCA: per-hypothesis spatial/temporal filters scored by the
// first canonical correlation, with optional cumulative covariance learning
// from previously predicted trials.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "cvep/encoding.hpp"
#include "cvep/error.hpp"
#include "cvep/outcome.hpp"
#include "cvep/types.hpp"

namespace cvep {

struct CanonicalPair {
  Vector spatial;   // w, length C
  Vector temporal;  // r, length M
  double rho = 0.0;
};

namespace cca {

inline constexpr double kRidge = 1e-9;

/// Cholesky factor of sigma + (1e-9 * trace / dim) * I.
inline Eigen::LLT<Matrix> regularized_factor(const Matrix& sigma) {
  const double tr = sigma.trace();
  if (!(tr > 0.0) || !std::isfinite(tr)) {
    throw Error(Errc::DegenerateCovariance, "covariance has zero or non-finite trace");
  }
  Matrix reg = sigma;
  reg.diagonal().array() += kRidge * tr / static_cast<double>(sigma.rows());
  Eigen::LLT<Matrix> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::DegenerateCovariance, "covariance is not positive semi-definite");
  }
  return llt;
}

/// Leading singular pair of Lx^-1 Sxm Lm^-T, mapped back to filters.
inline CanonicalPair leading_pair(const Eigen::LLT<Matrix>& sxx, const Matrix& sxm,
                                  const Eigen::LLT<Matrix>& smm, bool want_filters = true) {
  // K = Lx^-1 Sxm Lm^-T
  Matrix k = sxx.matrixL().solve(sxm);
  k = smm.matrixL().solve(k.transpose()).transpose();
  CanonicalPair out;
  if (!want_filters) {
    // Largest eigenvalue of K K' (C x C) is rho^2.
    Eigen::SelfAdjointEigenSolver<Matrix> es(k * k.transpose(), Eigen::EigenvaluesOnly);
    out.rho = std::sqrt(std::max(0.0, es.eigenvalues()(es.eigenvalues().size() - 1)));
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(k, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.rho = svd.singularValues()(0);
  out.spatial = sxx.matrixU().solve(Vector(svd.matrixU().col(0)));
  out.temporal = smm.matrixU().solve(Vector(svd.matrixV().col(0)));
  Index imax = 0;
  out.temporal.cwiseAbs().maxCoeff(&imax);
  if (out.temporal(imax) < 0.0) {
    out.temporal = -out.temporal;
    out.spatial = -out.spatial;
  }
  return out;
}

}  // namespace cca

/// Spatial filter w and temporal filter r maximizing
/// w' Sxm r / sqrt((w' Sxx w)(r' Smm r)); rho is the attained maximum.
inline CanonicalPair fit_filters(const Matrix& sxx, const Matrix& sxm, const Matrix& smm) {
  if (sxx.rows() != sxx.cols() || smm.rows() != smm.cols() || sxm.rows() != sxx.rows() ||
      sxm.cols() != smm.rows()) {
    throw Error(Errc::ShapeError, "covariance shapes do not agree");
  }
  return cca::leading_pair(cca::regularized_factor(sxx), sxm, cca::regularized_factor(smm));
}

/// Covariance accumulators of previously decoded trials. The predicted
/// structure of a past trial is the same whichever hypothesis is scored now,
/// so the cross and temporal terms are shared by all hypotheses.
struct CcaState {
  Accumulation mode = Accumulation::instantaneous;
  Matrix sxx;  // C x C, sum of X X'
  Matrix sxm;  // C x M, sum of X M_pred'
  Matrix smm;  // M x M, sum of M_pred M_pred'
  Index n_trials_seen = 0;

  bool empty() const { return n_trials_seen == 0; }
};

/// Candidate structure matrices for one trial length with their temporal
/// covariances, which depend on the code alone and are reused across trials.
struct HypothesisSet {
  std::vector<StructureMatrix> structures;
  std::vector<Matrix> grams;                  // M_i M_i'
  std::vector<Eigen::LLT<Matrix>> factors;    // regularized Cholesky of grams

  HypothesisSet() = default;
  explicit HypothesisSet(std::vector<StructureMatrix> s) : structures(std::move(s)) {
    for (const auto& m : structures) {
      grams.push_back(m.gram());
      factors.push_back(cca::regularized_factor(grams.back()));
    }
  }

  Index length() const { return structures.empty() ? 0 : structures.front().cols(); }
};

/// Scores every hypothesis on one trial. In cumulative mode the accumulators
/// are added to the current trial's covariances.
inline DecodeOutcome decode(const Trial& trial, const HypothesisSet& hyp, const CcaState& state) {
  if (hyp.structures.empty()) throw Error(Errc::InvalidArgument, "no hypotheses");
  const Index lag = hyp.structures.front().lag();
  if (trial.length() < lag) throw Error(Errc::TrialTooShort, "trial shorter than the response length");
  if (hyp.length() != trial.length()) throw Error(Errc::ShapeError, "hypotheses built for another trial length");
  const bool pooled = state.mode == Accumulation::cumulative && !state.empty();
  if (pooled && state.sxx.rows() != trial.channels()) {
    throw Error(Errc::ShapeError, "accumulated channel count differs from trial");
  }

  Matrix sxx = trial.samples * trial.samples.transpose();
  if (pooled) sxx += state.sxx;
  const auto sxx_factor = cca::regularized_factor(sxx);

  std::vector<double> scores;
  scores.reserve(hyp.structures.size());
  for (std::size_t i = 0; i < hyp.structures.size(); ++i) {
    Matrix sxm = hyp.structures[i].cross(trial.samples);
    if (!pooled) {
      scores.push_back(cca::leading_pair(sxx_factor, sxm, hyp.factors[i], false).rho);
      continue;
    }
    if (state.smm.rows() != hyp.grams[i].rows()) throw Error(Errc::ShapeError, "accumulated M differs");
    sxm += state.sxm;
    const Matrix smm = hyp.grams[i] + state.smm;
    scores.push_back(cca::leading_pair(sxx_factor, sxm, cca::regularized_factor(smm), false).rho);
  }
  return make_outcome(std::move(scores));
}

/// As above for structures of any length; they are truncated to the trial.
inline DecodeOutcome decode(const Trial& trial, std::span<const StructureMatrix> structures,
                            const CcaState& state) {
  if (structures.empty()) throw Error(Errc::InvalidArgument, "no hypotheses");
  if (trial.length() < structures.front().lag()) {
    throw Error(Errc::TrialTooShort, "trial shorter than the response length");
  }
  std::vector<StructureMatrix> cut;
  for (const auto& s : structures) cut.push_back(s.cols() == trial.length() ? s : s.truncated(trial.length()));
  return decode(trial, HypothesisSet(std::move(cut)), state);
}

/// Adds a finished trial and the structure matrix of its predicted code.
inline void update_cumulative(CcaState& state, const Trial& trial, const StructureMatrix& predicted) {
  if (state.mode != Accumulation::cumulative) {
    throw Error(Errc::InvalidArgument, "state is not cumulative");
  }
  const StructureMatrix m =
      (predicted.cols() == trial.length()) ? predicted : predicted.truncated(trial.length());
  if (state.empty()) {
    state.sxx = Matrix::Zero(trial.channels(), trial.channels());
    state.sxm = Matrix::Zero(trial.channels(), m.rows());
    state.smm = Matrix::Zero(m.rows(), m.rows());
  } else if (state.sxx.rows() != trial.channels() || state.smm.rows() != m.rows()) {
    throw Error(Errc::ShapeError, "trial does not match accumulated dimensions");
  }
  state.sxx += trial.samples * trial.samples.transpose();
  state.sxm += m.cross(trial.samples);
  state.smm += m.gram();
  ++state.n_trials_seen;
}

/// Owns the candidate codes and caches hypotheses per trial length.
class CcaDecoder {
 public:
  CcaDecoder(std::vector<BitSequence> codes, Accumulation mode, Index lag = kResponseLength)
      : codes_(std::move(codes)), lag_(lag) {
    state_.mode = mode;
  }

  Accumulation mode() const { return state_.mode; }
  const CcaState& state() const { return state_; }

  DecodeOutcome decode(const Trial& trial) {
    return cvep::decode(trial, hypotheses_for(trial), state_);
  }

  void learn(const Trial& trial, const DecodeOutcome& outcome) {
    if (state_.mode != Accumulation::cumulative) return;
    const auto& h = hypotheses_for(trial);
    update_cumulative(state_, trial, h.structures.at(static_cast<std::size_t>(outcome.label)));
  }

  void reset() {
    const auto mode = state_.mode;
    state_ = CcaState{};
    state_.mode = mode;
  }

 private:
  const HypothesisSet& hypotheses_for(const Trial& trial) {
    if (trial.length() < lag_) throw Error(Errc::TrialTooShort, "trial shorter than the response length");
    auto it = cache_.find(trial.length());
    if (it == cache_.end()) {
      it = cache_.emplace(trial.length(), HypothesisSet(build_structures(codes_, trial.length(), lag_, trial.fs_hz))).first;
    }
    return it->second;
  }

  std::vector<BitSequence> codes_;
  Index lag_;
  CcaState state_;
  std::map<Index, HypothesisSet> cache_;
};

}  // namespace cvep
