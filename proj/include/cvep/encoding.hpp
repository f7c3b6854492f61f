#pragma once

// Event time-series and Toeplitz structure matrices for reconvolution.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "cvep/codegen.hpp"
#include "cvep/error.hpp"
#include "cvep/types.hpp"

namespace cvep {

enum class Event : Index { short_flash = 0, long_flash = 1, onset = 2 };

/// E x T binary event matrix plus the sorted onset samples of every row.
struct EventTimeSeries {
  Matrix events;
  std::vector<std::vector<Index>> onsets;

  Index num_events() const { return events.rows(); }
  Index length() const { return events.cols(); }
};

namespace detail {

inline EventTimeSeries events_from_onsets(std::vector<std::vector<Index>> onsets, Index n_samples) {
  EventTimeSeries ev;
  ev.events = Matrix::Zero(static_cast<Index>(onsets.size()), n_samples);
  for (std::size_t e = 0; e < onsets.size(); ++e) {
    for (Index t : onsets[e]) ev.events(static_cast<Index>(e), t) = 1.0;
  }
  ev.onsets = std::move(onsets);
  return ev;
}

}  // namespace detail

/// Short/long flash onsets of the code repeated over n_samples at fs_hz, and
/// the stimulation onset at t = 0. A run of one 1 is a short flash, a run of
/// two is a long flash, both placed at the first frame of the run.
inline EventTimeSeries extract_events_for_length(const BitSequence& code, Index n_samples,
                                                 double fs_hz = kDecodeRateHz) {
  if (code.size() == 0) throw Error(Errc::InvalidArgument, "empty code");
  if (n_samples <= 0) throw Error(Errc::InvalidArgument, "event series needs at least one sample");
  const double ratio = fs_hz / code.rate_hz;
  const Index per_frame = static_cast<Index>(std::llround(ratio));
  if (per_frame < 1 || std::abs(ratio - static_cast<double>(per_frame)) > 1e-9) {
    throw Error(Errc::InvalidArgument, "sampling rate must be a multiple of the code rate");
  }

  const Index n_frames = (n_samples + per_frame - 1) / per_frame;
  std::vector<std::vector<Index>> onsets(kNumEvents);
  Index f = 0;
  while (f < n_frames) {
    if (code.cyclic(static_cast<std::size_t>(f)) == 0) {
      ++f;
      continue;
    }
    Index run = 0;
    while (f + run < n_frames && code.cyclic(static_cast<std::size_t>(f + run)) == 1) ++run;
    // A run cut by the end of the window still starts a flash; classify it by
    // what the code would show next.
    Index full = run;
    while (code.cyclic(static_cast<std::size_t>(f + full)) == 1) {
      ++full;
      if (full > 2) break;
    }
    if (full > 2) throw Error(Errc::UnmodulatedCode, "run of more than two ones");
    const Event kind = (full == 1) ? Event::short_flash : Event::long_flash;
    onsets[static_cast<std::size_t>(kind)].push_back(f * per_frame);
    f += run;
  }
  onsets[static_cast<std::size_t>(Event::onset)].push_back(0);
  return detail::events_from_onsets(std::move(onsets), n_samples);
}

inline EventTimeSeries extract_events(const BitSequence& code, Index n_cycles,
                                      double fs_hz = kDecodeRateHz) {
  if (n_cycles < 1) throw Error(Errc::InvalidArgument, "n_cycles must be at least one");
  const Index per_frame = static_cast<Index>(std::llround(fs_hz / code.rate_hz));
  return extract_events_for_length(code, n_cycles * static_cast<Index>(code.size()) * per_frame, fs_hz);
}

/// M x T Toeplitz design matrix, M = E * L: row e*L + l holds event row e
/// delayed by l samples, truncated at the trial end.
///
/// Stored as event onset lists; products with the matrix never materialize it.
class StructureMatrix {
 public:
  StructureMatrix() = default;

  StructureMatrix(const EventTimeSeries& ev, Index lag)
      : onsets_(ev.onsets), lag_(lag), length_(ev.length()) {
    if (lag <= 0) throw Error(Errc::InvalidLag, "response length must be positive");
    if (onsets_.empty()) {
      // Events given only as a matrix.
      onsets_.resize(static_cast<std::size_t>(ev.events.rows()));
      for (Index e = 0; e < ev.events.rows(); ++e) {
        for (Index t = 0; t < ev.events.cols(); ++t) {
          if (ev.events(e, t) != 0.0) onsets_[static_cast<std::size_t>(e)].push_back(t);
        }
      }
    }
  }

  Index num_events() const { return static_cast<Index>(onsets_.size()); }
  Index lag() const { return lag_; }
  Index rows() const { return num_events() * lag_; }
  Index cols() const { return length_; }
  const std::vector<std::vector<Index>>& onsets() const { return onsets_; }

  /// Same events, first n columns only.
  StructureMatrix truncated(Index n) const {
    if (n > length_) throw Error(Errc::ShapeError, "cannot extend a structure matrix");
    StructureMatrix out = *this;
    out.length_ = n;
    for (auto& list : out.onsets_) {
      list.erase(std::lower_bound(list.begin(), list.end(), n), list.end());
    }
    return out;
  }

  Matrix dense() const {
    Matrix m = Matrix::Zero(rows(), cols());
    for (Index e = 0; e < num_events(); ++e) {
      for (Index p : onsets_[static_cast<std::size_t>(e)]) {
        for (Index l = 0; l < lag_ && p + l < length_; ++l) m(e * lag_ + l, p + l) = 1.0;
      }
    }
    return m;
  }

  /// r' * M: the predicted time course for stacked per-event responses r.
  Vector reconvolve(const Eigen::Ref<const Vector>& r) const {
    if (r.size() != rows()) throw Error(Errc::ShapeError, "response vector length != E*L");
    Vector out = Vector::Zero(length_);
    for (Index e = 0; e < num_events(); ++e) {
      for (Index p : onsets_[static_cast<std::size_t>(e)]) {
        const Index n = std::min(lag_, length_ - p);
        out.segment(p, n) += r.segment(e * lag_, n);
      }
    }
    return out;
  }

  /// X * M' for a C x T data matrix.
  Matrix cross(const Eigen::Ref<const Matrix>& x) const {
    if (x.cols() != length_) throw Error(Errc::ShapeError, "data length != structure length");
    Matrix out = Matrix::Zero(x.rows(), rows());
    for (Index e = 0; e < num_events(); ++e) {
      for (Index p : onsets_[static_cast<std::size_t>(e)]) {
        const Index n = std::min(lag_, length_ - p);
        out.middleCols(e * lag_, n) += x.middleCols(p, n);
      }
    }
    return out;
  }

  /// M * M'. Entry (e1 l1, e2 l2) counts t < T with an e1 onset at t - l1
  /// and an e2 onset at t - l2.
  Matrix gram() const {
    const Index m = rows();
    Matrix g = Matrix::Zero(m, m);
    for (Index e1 = 0; e1 < num_events(); ++e1) {
      const auto& a = onsets_[static_cast<std::size_t>(e1)];
      for (Index e2 = 0; e2 < num_events(); ++e2) {
        const auto& b = onsets_[static_cast<std::size_t>(e2)];
        for (Index p : a) {
          auto it = std::lower_bound(b.begin(), b.end(), p - lag_ + 1);
          for (; it != b.end() && *it < p + lag_; ++it) {
            const Index d = *it - p;  // l1 - l2
            const Index l2_begin = std::max<Index>(0, -d);
            const Index l2_end = std::min(lag_ - d, lag_);
            for (Index l2 = l2_begin; l2 < l2_end; ++l2) {
              const Index l1 = l2 + d;
              if (p + l1 >= length_) break;
              g(e1 * lag_ + l1, e2 * lag_ + l2) += 1.0;
            }
          }
        }
      }
    }
    return g;
  }

 private:
  std::vector<std::vector<Index>> onsets_;
  Index lag_ = kResponseLength;
  Index length_ = 0;
};

inline StructureMatrix build_structure_matrix(const EventTimeSeries& ev, Index lag = kResponseLength) {
  return StructureMatrix(ev, lag);
}

/// Structure matrices for every code over n_samples at the decode rate.
inline std::vector<StructureMatrix> build_structures(std::span<const BitSequence> codes, Index n_samples,
                                                     Index lag = kResponseLength,
                                                     double fs_hz = kDecodeRateHz) {
  std::vector<StructureMatrix> out;
  out.reserve(codes.size());
  for (const auto& c : codes) {
    out.emplace_back(extract_events_for_length(c, n_samples, fs_hz), lag);
  }
  return out;
}

}  // namespace cvep
