#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cvep/error.hpp"
#include "cvep/types.hpp"

namespace cvep {

enum class Accumulation { instantaneous, cumulative };

/// Predicted hypothesis index (0-based), per-hypothesis scores and a
/// confidence in [0, 1].
struct DecodeOutcome {
  int label = 0;
  std::vector<double> scores;
  double confidence = 0.0;
};

/// Normalized top-2 margin (s1 - s2) / s1, zero when s1 <= 0.
inline double top2_confidence(const std::vector<double>& scores) {
  if (scores.empty()) return 0.0;
  double s1 = -std::numeric_limits<double>::infinity();
  double s2 = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (s > s1) {
      s2 = s1;
      s1 = s;
    } else if (s > s2) {
      s2 = s;
    }
  }
  if (!(s1 > 0.0)) return 0.0;
  if (scores.size() == 1) return 1.0;
  return std::clamp((s1 - s2) / s1, 0.0, 1.0);
}

/// Argmax with ties resolved to the lowest index.
inline DecodeOutcome make_outcome(std::vector<double> scores) {
  DecodeOutcome out;
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(Errc::NumericalFailure, "non-finite hypothesis score");
  }
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(out.label)]) out.label = static_cast<int>(i);
  }
  out.confidence = top2_confidence(scores);
  out.scores = std::move(scores);
  return out;
}

}  // namespace cvep
