#pragma once

#include <cstdint>
#include <vector>

#include "cvep/codegen.hpp"
#include "cvep/types.hpp"

namespace cvep {

/// Labeled trials with the candidate codes they were recorded under.
///
/// Trials carry pre_onset_samples of data before stimulus onset when the
/// session holds raw (not yet preprocessed) windows.
struct Session {
  std::vector<Trial> trials;
  std::vector<BitSequence> codes;
  double fs_hz = kDecodeRateHz;
  double frame_rate_hz = kFrameRateHz;
  std::uint64_t seed = 0;
  Index pre_onset_samples = 0;

  Index channels() const { return trials.empty() ? 0 : trials.front().channels(); }
  Index trial_length() const { return trials.empty() ? 0 : trials.front().length(); }
  bool is_raw() const { return pre_onset_samples > 0 || fs_hz != kDecodeRateHz; }
};

}  // namespace cvep
