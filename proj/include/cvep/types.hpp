#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cvep/error.hpp"

namespace cvep {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kFrameRateHz = 60.0;
inline constexpr double kDecodeRateHz = 180.0;
inline constexpr Index kNumEvents = 3;
inline constexpr Index kResponseLength = 54;  // 300 ms at 180 Hz

/// One symbol-selection attempt: C x T samples aligned to stimulus onset.
struct Trial {
  Matrix samples;
  double fs_hz = kDecodeRateHz;
  double frame_rate_hz = kFrameRateHz;
  std::optional<int> label;

  Index channels() const { return samples.rows(); }
  Index length() const { return samples.cols(); }
  double duration_s() const { return static_cast<double>(length()) / fs_hz; }

  /// Samples per stimulus frame; throws if the rates are not integer related.
  Index samples_per_frame() const {
    const double ratio = fs_hz / frame_rate_hz;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9) {
      throw Error(Errc::InvalidArgument, "sampling rate is not a multiple of the frame rate");
    }
    return static_cast<Index>(rounded);
  }

  /// First n samples of the trial.
  Trial prefix(Index n) const {
    if (n < 0 || n > length()) {
      throw Error(Errc::ShapeError, "prefix longer than trial");
    }
    Trial out{samples.leftCols(n), fs_hz, frame_rate_hz, label};
    return out;
  }
};

/// Number of decode-rate samples for a duration, rounded to whole frames.
inline Index samples_for_duration(double seconds, double fs_hz = kDecodeRateHz,
                                  double frame_rate_hz = kFrameRateHz) {
  const Index frames = static_cast<Index>(std::llround(seconds * frame_rate_hz));
  const Index per_frame = static_cast<Index>(std::llround(fs_hz / frame_rate_hz));
  return frames * per_frame;
}

}  // namespace cvep
