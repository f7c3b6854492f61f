#pragma once

// Synthetic c-VEP EEG from a linear forward model: per-event response
// templates reconvolved with a code's event trains, projected through a
// single spatial pattern and buried in noise at a requested SNR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "cvep/codegen.hpp"
#include "cvep/encoding.hpp"
#include "cvep/error.hpp"
#include "cvep/session.hpp"
#include "cvep/sigproc.hpp"
#include "cvep/types.hpp"

namespace cvep {

enum class NoiseKind { white, pink };

/// Windowed damped oscillation, defined in continuous time so the same
/// response can be sampled at any rate.
struct ResponseShape {
  double freq_hz = 10.0;
  double decay_s = 0.08;
  double phase = 0.0;
  double span_s = static_cast<double>(kResponseLength - 1) / kDecodeRateHz;
  double amplitude = 1.0;

  double operator()(double t) const {
    if (t <= 0.0 || t >= span_s) return 0.0;
    const double window = std::sin(std::numbers::pi * t / span_s);
    return amplitude * window * std::exp(-t / decay_s) *
           std::sin(2.0 * std::numbers::pi * freq_hz * t + phase);
  }

  /// Samples for lags 0 .. n-1 at fs_hz.
  Vector sample(double fs_hz, Index n) const {
    Vector v(n);
    for (Index l = 0; l < n; ++l) v(l) = (*this)(static_cast<double>(l) / fs_hz);
    return v;
  }
};

/// Short-flash, long-flash and onset shapes with unit peak at 180 Hz.
inline std::vector<ResponseShape> default_shapes(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Range {
    double f_lo, f_hi, d_lo, d_hi;
  };
  constexpr Range ranges[kNumEvents] = {{14.0, 20.0, 0.04, 0.07}, {10.0, 15.0, 0.05, 0.09}, {4.0, 7.0, 0.08, 0.12}};
  std::vector<ResponseShape> shapes;
  for (const auto& r : ranges) {
    ResponseShape s;
    s.freq_hz = r.f_lo + (r.f_hi - r.f_lo) * u(rng);
    s.decay_s = r.d_lo + (r.d_hi - r.d_lo) * u(rng);
    s.phase = 2.0 * std::numbers::pi * u(rng);
    const double peak = s.sample(kDecodeRateHz, kResponseLength).cwiseAbs().maxCoeff();
    s.amplitude = (peak > 0.0) ? 1.0 / peak : 1.0;
    shapes.push_back(s);
  }
  return shapes;
}

inline Matrix responses_from_shapes(std::span<const ResponseShape> shapes, double fs_hz = kDecodeRateHz,
                                    Index length = kResponseLength) {
  Matrix r(static_cast<Index>(shapes.size()), length);
  for (std::size_t e = 0; e < shapes.size(); ++e) {
    r.row(static_cast<Index>(e)) = shapes[e].sample(fs_hz, length).transpose();
  }
  return r;
}

/// E x L response templates at 180 Hz.
inline Matrix default_responses(std::uint64_t seed) { return responses_from_shapes(default_shapes(seed)); }

struct ForwardModel {
  Matrix responses;  // E x L at 180 Hz
  std::vector<ResponseShape> shapes;
  Vector mixing;  // C
  NoiseKind noise = NoiseKind::white;
  double snr = std::numeric_limits<double>::infinity();  // signal / noise power
  bool drift = false;

  /// Responses stacked event-major, the temporal filter the decoder estimates.
  Vector stacked_responses() const {
    Vector r(responses.size());
    for (Index e = 0; e < responses.rows(); ++e) r.segment(e * responses.cols(), responses.cols()) = responses.row(e).transpose();
    return r;
  }
};

inline double snr_from_db(double db) { return std::pow(10.0, db / 10.0); }

inline ForwardModel default_model(std::uint64_t seed, Index channels = 8,
                                  double snr = std::numeric_limits<double>::infinity(),
                                  NoiseKind noise = NoiseKind::white) {
  ForwardModel m;
  m.shapes = default_shapes(seed);
  m.responses = responses_from_shapes(m.shapes);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n01(0.0, 1.0);
  m.mixing.resize(channels);
  for (Index c = 0; c < channels; ++c) m.mixing(c) = n01(rng);
  m.mixing /= m.mixing.norm();
  m.snr = snr;
  m.noise = noise;
  return m;
}

namespace detail {

inline void validate_model(const ForwardModel& model) {
  if (!(model.snr >= 0.0)) throw Error(Errc::InvalidSnr, "snr must be non-negative");
  if (model.mixing.size() == 0 || model.mixing.isZero(0.0)) {
    throw Error(Errc::InvalidArgument, "mixing pattern must be non-zero");
  }
}

inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Unit-variance background noise, C x T.
inline Matrix background_noise(NoiseKind kind, Index channels, Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix noise(channels, n);
  for (Index c = 0; c < channels; ++c) {
    if (kind == NoiseKind::white) {
      for (Index t = 0; t < n; ++t) noise(c, t) = n01(rng);
      continue;
    }
    // Kellet's three-pole approximation of a 1/f power spectrum.
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    for (Index t = 0; t < n; ++t) {
      const double w = n01(rng);
      b0 = 0.99765 * b0 + w * 0.0990460;
      b1 = 0.96300 * b1 + w * 0.2965164;
      b2 = 0.57000 * b2 + w * 1.0526913;
      noise(c, t) = b0 + b1 + b2 + w * 0.1848;
    }
    const double sd = std::sqrt(noise.row(c).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) noise.row(c) /= sd;
  }
  return noise;
}

// Adds noise so that mean(clean^2) / mean(noise^2) equals snr exactly.
inline Matrix mix_with_noise(const Matrix& clean, const ForwardModel& model, std::mt19937_64& rng) {
  if (std::isinf(model.snr)) return clean;
  Matrix noise = background_noise(model.noise, clean.rows(), clean.cols(), rng);
  if (model.drift) {
    std::uniform_real_distribution<double> slope(-2.0, 2.0);
    for (Index c = 0; c < noise.rows(); ++c) {
      const double a = slope(rng);
      for (Index t = 0; t < noise.cols(); ++t) {
        noise(c, t) += a * (static_cast<double>(t) / static_cast<double>(std::max<Index>(1, noise.cols() - 1)) - 0.5);
      }
    }
  }
  const double p_noise = noise.squaredNorm() / static_cast<double>(noise.size());
  if (model.snr == 0.0) return noise / std::sqrt(p_noise);
  const double p_signal = clean.squaredNorm() / static_cast<double>(clean.size());
  return clean + noise * std::sqrt(p_signal / (model.snr * p_noise));
}

}  // namespace detail

/// Noise-free C x T trial: mixing * (r' M) for the code's structure matrix.
inline Matrix clean_signal(const BitSequence& code, const ForwardModel& model, Index n_samples) {
  const StructureMatrix m(extract_events_for_length(code, n_samples), model.responses.cols());
  return model.mixing * m.reconvolve(model.stacked_responses()).transpose();
}

inline Trial synthesize_trial(const BitSequence& code, const ForwardModel& model, double dur_s, std::uint64_t seed) {
  detail::validate_model(model);
  if (!(dur_s > 0.0) || dur_s > 31.5 + 1e-9) throw Error(Errc::InvalidArgument, "duration must lie in (0, 31.5] s");
  const Index n = samples_for_duration(dur_s);
  std::mt19937_64 rng(seed);
  Trial t;
  t.samples = detail::mix_with_noise(clean_signal(code, model, n), model, rng);
  return t;
}

/// n_runs runs of one trial per code, each run in its own shuffled order.
inline Session synthesize_session(Index n_runs, const ForwardModel& model, std::uint64_t seed,
                                  std::vector<BitSequence> codes = stimulus_codes(), double dur_s = 31.5) {
  detail::validate_model(model);
  if (n_runs < 1) throw Error(Errc::InvalidArgument, "n_runs must be at least one");
  Session s;
  s.codes = std::move(codes);
  s.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<int> order(s.codes.size());
  std::uint64_t trial_index = 0;
  for (Index run = 0; run < n_runs; ++run) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int label : order) {
      Trial t = synthesize_trial(s.codes[static_cast<std::size_t>(label)], model, dur_s,
                                 detail::child_seed(seed, trial_index++));
      t.label = label;
      s.trials.push_back(std::move(t));
    }
  }
  return s;
}

/// Continuous recording at fs_hz: every trial is a cue period followed by
/// dur_s of stimulation, markers at stimulation onsets. Responses are the
/// model's continuous shapes sampled at fs_hz; optional 50 Hz line noise is
/// added on top of the background.
inline ContinuousRecording synthesize_recording(Index n_runs, const ForwardModel& model, std::uint64_t seed,
                                                std::span<const BitSequence> codes, double fs_hz = 512.0,
                                                double dur_s = 31.5, double cue_s = 1.0,
                                                double line_noise_amplitude = 0.0) {
  detail::validate_model(model);
  if (n_runs < 1) throw Error(Errc::InvalidArgument, "n_runs must be at least one");
  if (model.shapes.empty()) throw Error(Errc::InvalidArgument, "model has no continuous response shapes");
  const Index n_trials = n_runs * static_cast<Index>(codes.size());
  const Index cue = static_cast<Index>(std::llround(cue_s * fs_hz));
  const Index stim = static_cast<Index>(std::llround(dur_s * fs_hz));
  const Index tail = cue;
  const Index total = n_trials * (cue + stim) + tail;
  const Index span = static_cast<Index>(std::ceil(model.shapes.front().span_s * fs_hz)) + 1;

  std::vector<Vector> kernels;
  for (const auto& shape : model.shapes) kernels.push_back(shape.sample(fs_hz, span));

  Vector source = Vector::Zero(total);
  ContinuousRecording rec;
  rec.fs_hz = fs_hz;
  std::mt19937_64 rng(seed);
  std::vector<int> order(codes.size());
  Index cursor = 0;
  for (Index run = 0; run < n_runs; ++run) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int label : order) {
      const Index onset = cursor + cue;
      rec.markers.push_back({onset, label});
      const Index n_frames = static_cast<Index>(std::llround(dur_s * codes[static_cast<std::size_t>(label)].rate_hz));
      const auto ev = extract_events_for_length(codes[static_cast<std::size_t>(label)], n_frames,
                                                codes[static_cast<std::size_t>(label)].rate_hz);
      for (std::size_t e = 0; e < ev.onsets.size(); ++e) {
        for (Index frame : ev.onsets[e]) {
          const Index at = onset + static_cast<Index>(std::llround(static_cast<double>(frame) * fs_hz / kFrameRateHz));
          const Index n = std::min(span, onset + stim - at);
          if (n > 0) source.segment(at, n) += kernels[e].head(n);
        }
      }
      cursor += cue + stim;
    }
  }
  const Matrix clean = model.mixing * source.transpose();
  std::mt19937_64 noise_rng(detail::child_seed(seed, 0xfeedULL));
  rec.samples = detail::mix_with_noise(clean, model, noise_rng);
  if (line_noise_amplitude > 0.0) {
    for (Index t = 0; t < total; ++t) {
      rec.samples.col(t).array() += line_noise_amplitude * std::sin(2.0 * std::numbers::pi * 50.0 * static_cast<double>(t) / fs_hz);
    }
  }
  return rec;
}

/// Raw windows (with pre_s of pre-onset data) of a recording as a session.
inline Session raw_session(const ContinuousRecording& rec, std::vector<BitSequence> codes, std::uint64_t seed,
                           double pre_s = 0.5, double dur_s = 31.5) {
  Session s;
  s.trials = extract_windows(rec, pre_s, dur_s);
  s.codes = std::move(codes);
  s.fs_hz = rec.fs_hz;
  s.seed = seed;
  s.pre_onset_samples = static_cast<Index>(std::llround(pre_s * rec.fs_hz));
  return s;
}

/// Decode-ready session: preprocesses raw windows, passes others through.
inline Session preprocess_session(const Session& raw, const PipelineConfig& cfg) {
  if (!raw.is_raw()) return raw;
  Session out;
  out.codes = raw.codes;
  out.seed = raw.seed;
  out.fs_hz = cfg.target_fs;
  out.frame_rate_hz = raw.frame_rate_hz;
  for (const auto& w : raw.trials) {
    Trial window = w;
    window.fs_hz = raw.fs_hz;
    out.trials.push_back(preprocess_window(cfg, window, raw.pre_onset_samples));
  }
  return out;
}

}  // namespace cvep
