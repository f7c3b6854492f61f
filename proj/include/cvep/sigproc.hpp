#pragma once

// Continuous-signal preprocessing: zero-phase IIR filtering, rational
// polyphase resampling, trial segmentation and onset cropping.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "cvep/error.hpp"
#include "cvep/types.hpp"

namespace cvep {

struct Marker {
  Index sample = 0;
  int label = -1;
};

/// Channels x samples recording with stimulus-onset markers.
struct ContinuousRecording {
  Matrix samples;
  double fs_hz = 512.0;
  std::vector<Marker> markers;

  Index channels() const { return samples.rows(); }
  Index length() const { return samples.cols(); }
};

/// Direct-form II transposed biquad, a0 normalized to one.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  std::complex<double> response(double f_hz, double fs_hz) const {
    const auto z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs_hz);
    const auto z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }

  /// Output level for a constant unit input.
  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

using SecondOrderSections = std::vector<Biquad>;

inline std::complex<double> response(const SecondOrderSections& sos, double f_hz, double fs_hz) {
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= s.response(f_hz, fs_hz);
  return h;
}

struct FilterSpec {
  enum class Kind { notch, bandpass };

  Kind kind = Kind::bandpass;
  double center_hz = 50.0;
  double q = 30.0;
  double highpass_hz = 6.0;
  double lowpass_hz = 50.0;
  int order = 4;

  static FilterSpec notch(double center_hz, double q = 30.0) {
    FilterSpec f;
    f.kind = Kind::notch;
    f.center_hz = center_hz;
    f.q = q;
    return f;
  }

  static FilterSpec bandpass(double highpass_hz, double lowpass_hz, int order = 4) {
    FilterSpec f;
    f.kind = Kind::bandpass;
    f.highpass_hz = highpass_hz;
    f.lowpass_hz = lowpass_hz;
    f.order = order;
    return f;
  }
};

namespace detail {

enum class Pass { low, high };

// Bilinear transform of an even-order Butterworth prototype, cutoff prewarped.
inline SecondOrderSections butterworth(Pass pass, int order, double cutoff_hz, double fs_hz) {
  if (order < 2 || order % 2 != 0) {
    throw Error(Errc::InvalidArgument, "Butterworth order must be even and positive");
  }
  const double k = 2.0 * fs_hz;
  const double wc = k * std::tan(std::numbers::pi * cutoff_hz / fs_hz);
  SecondOrderSections sos;
  for (int i = 0; i < order / 2; ++i) {
    const double theta = std::numbers::pi * (2.0 * i + order + 1) / (2.0 * order);
    const double re = wc * std::cos(theta);  // pole real part, negative
    const double mag2 = wc * wc;
    const double a0 = k * k - 2.0 * re * k + mag2;
    Biquad s;
    s.a1 = (2.0 * mag2 - 2.0 * k * k) / a0;
    s.a2 = (k * k + 2.0 * re * k + mag2) / a0;
    if (pass == Pass::low) {
      const double g = mag2 / a0;
      s.b0 = g, s.b1 = 2 * g, s.b2 = g;
    } else {
      const double g = k * k / a0;
      s.b0 = g, s.b1 = -2 * g, s.b2 = g;
    }
    sos.push_back(s);
  }
  return sos;
}

// Forward pass with each section started in steady state for x[0].
inline void sos_forward(const SecondOrderSections& sos, std::vector<double>& x) {
  if (x.empty()) return;
  for (const auto& s : sos) {
    const double x0 = x.front();
    const double y0 = s.dc_gain() * x0;
    double z1 = y0 - s.b0 * x0;
    double z2 = s.b2 * x0 - s.a2 * y0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace detail

inline SecondOrderSections design(const FilterSpec& spec, double fs_hz) {
  const double nyquist = fs_hz / 2.0;
  if (spec.kind == FilterSpec::Kind::notch) {
    if (!(spec.center_hz > 0.0) || spec.center_hz >= nyquist) {
      throw Error(Errc::InvalidCutoff, "notch frequency outside (0, Nyquist)");
    }
    if (!(spec.q > 0.0)) throw Error(Errc::InvalidArgument, "notch Q must be positive");
    const double w0 = 2.0 * std::numbers::pi * spec.center_hz / fs_hz;
    const double alpha = std::sin(w0) / (2.0 * spec.q);
    const double a0 = 1.0 + alpha;
    Biquad s;
    s.b0 = 1.0 / a0;
    s.b1 = -2.0 * std::cos(w0) / a0;
    s.b2 = 1.0 / a0;
    s.a1 = -2.0 * std::cos(w0) / a0;
    s.a2 = (1.0 - alpha) / a0;
    return {s};
  }
  if (!(spec.highpass_hz > 0.0) || spec.highpass_hz >= spec.lowpass_hz ||
      spec.lowpass_hz >= nyquist) {
    throw Error(Errc::InvalidCutoff, "bandpass requires 0 < highpass < lowpass < Nyquist");
  }
  auto sos = detail::butterworth(detail::Pass::high, spec.order, spec.highpass_hz, fs_hz);
  const auto low = detail::butterworth(detail::Pass::low, spec.order, spec.lowpass_hz, fs_hz);
  sos.insert(sos.end(), low.begin(), low.end());
  return sos;
}

/// Forward-backward filtering of one channel with odd-reflection padding.
inline std::vector<double> filtfilt(const SecondOrderSections& sos, std::span<const double> x,
                                    Index pad) {
  const Index n = static_cast<Index>(x.size());
  if (n == 0) return {};
  pad = std::clamp<Index>(pad, 0, n - 1);
  std::vector<double> ext(static_cast<std::size_t>(n + 2 * pad));
  const double first = x.front();
  const double last = x.back();
  for (Index i = 0; i < pad; ++i) {
    ext[static_cast<std::size_t>(i)] = 2.0 * first - x[static_cast<std::size_t>(pad - i)];
    ext[static_cast<std::size_t>(pad + n + i)] = 2.0 * last - x[static_cast<std::size_t>(n - 2 - i)];
  }
  std::copy(x.begin(), x.end(), ext.begin() + pad);

  detail::sos_forward(sos, ext);
  std::reverse(ext.begin(), ext.end());
  detail::sos_forward(sos, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + pad, ext.begin() + pad + n};
}

/// Zero-phase filtering of every channel; reflect-pads one second per side.
inline Matrix apply_zero_phase(const FilterSpec& spec, const Matrix& samples, double fs_hz) {
  const auto sos = design(spec, fs_hz);
  const Index pad = static_cast<Index>(std::llround(fs_hz));
  Matrix out(samples.rows(), samples.cols());
  std::vector<double> row(static_cast<std::size_t>(samples.cols()));
  for (Index c = 0; c < samples.rows(); ++c) {
    for (Index t = 0; t < samples.cols(); ++t) row[static_cast<std::size_t>(t)] = samples(c, t);
    const auto y = filtfilt(sos, row, pad);
    for (Index t = 0; t < samples.cols(); ++t) out(c, t) = y[static_cast<std::size_t>(t)];
  }
  return out;
}

inline ContinuousRecording apply_zero_phase(const FilterSpec& spec, const ContinuousRecording& rec) {
  ContinuousRecording out = rec;
  out.samples = apply_zero_phase(spec, rec.samples, rec.fs_hz);
  return out;
}

struct Ratio {
  Index up = 1;
  Index down = 1;
};

/// Smallest up/down with |up/down - target/source| <= 1e-9 relative.
inline Ratio rational_ratio(double source_hz, double target_hz) {
  if (!(source_hz > 0.0) || !(target_hz > 0.0)) {
    throw Error(Errc::InvalidArgument, "sampling rates must be positive");
  }
  const double r = target_hz / source_hz;
  // Continued-fraction convergents.
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double x = r;
  for (int iter = 0; iter < 64; ++iter) {
    const double a = std::floor(x);
    const long long ai = static_cast<long long>(a);
    const long long p2 = ai * p1 + p0;
    const long long q2 = ai * q1 + q0;
    p0 = p1, q0 = q1, p1 = p2, q1 = q2;
    if (std::abs(static_cast<double>(p1) / static_cast<double>(q1) - r) <= 1e-9 * r) break;
    const double frac = x - a;
    if (frac < 1e-15) break;
    x = 1.0 / frac;
  }
  if (std::abs(static_cast<double>(p1) / static_cast<double>(q1) - r) > 1e-9 * r) {
    throw Error(Errc::InvalidArgument, "no rational approximation for resampling ratio");
  }
  return {static_cast<Index>(p1), static_cast<Index>(q1)};
}

/// Polyphase FIR rational resampler with a Kaiser-windowed sinc prototype.
class Resampler {
 public:
  static constexpr Index kTapsPerPhase = 64;
  static constexpr double kKaiserBeta = 5.0;

  Resampler(double source_hz, double target_hz)
      : source_hz_(source_hz), target_hz_(target_hz), ratio_(rational_ratio(source_hz, target_hz)) {
    const Index up = ratio_.up;
    half_ = kTapsPerPhase / 2 * up;
    const Index n = 2 * half_ + 1;
    const double cutoff_hz = std::min(target_hz, source_hz) / 2.0;
    const double fn = cutoff_hz / (source_hz * static_cast<double>(up));
    const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
    taps_.resize(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double m = static_cast<double>(i - half_);
      const double arg = 2.0 * fn * m;
      const double sinc = (m == 0.0) ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double ratio = m / static_cast<double>(half_);
      const double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - ratio * ratio))) / i0_beta;
      taps_[static_cast<std::size_t>(i)] = 2.0 * fn * sinc * w;
      sum += taps_[static_cast<std::size_t>(i)];
    }
    for (auto& h : taps_) h *= static_cast<double>(up) / sum;
  }

  Ratio ratio() const { return ratio_; }

  Index output_length(Index n) const {
    return static_cast<Index>(std::llround(static_cast<double>(n) * static_cast<double>(ratio_.up) /
                                           static_cast<double>(ratio_.down)));
  }

  Index map_index(Index i) const { return output_length(i); }

  std::vector<double> apply(std::span<const double> x) const {
    const Index n = static_cast<Index>(x.size());
    const Index out_n = output_length(n);
    std::vector<double> y(static_cast<std::size_t>(out_n), 0.0);
    if (n == 0) return y;
    const Index up = ratio_.up, down = ratio_.down;
    const Index pad = std::min<Index>(n - 1, kTapsPerPhase);
    std::vector<double> ext(static_cast<std::size_t>(n + 2 * pad));
    for (Index i = 0; i < pad; ++i) {
      ext[static_cast<std::size_t>(i)] = 2.0 * x.front() - x[static_cast<std::size_t>(pad - i)];
      ext[static_cast<std::size_t>(pad + n + i)] = 2.0 * x.back() - x[static_cast<std::size_t>(n - 2 - i)];
    }
    std::copy(x.begin(), x.end(), ext.begin() + pad);
    const Index ext_n = static_cast<Index>(ext.size());
    const Index ntaps = static_cast<Index>(taps_.size());
    const Index offset = half_ + pad * up;
    for (Index m = 0; m < out_n; ++m) {
      const Index pos = m * down + offset;  // upsampled-grid index of the output
      Index first = (pos - ntaps + 1 + up - 1);
      first = first < 0 ? 0 : first / up;
      const Index last = std::min(pos / up, ext_n - 1);
      double acc = 0.0;
      for (Index k = first; k <= last; ++k) {
        acc += ext[static_cast<std::size_t>(k)] * taps_[static_cast<std::size_t>(pos - k * up)];
      }
      y[static_cast<std::size_t>(m)] = acc;
    }
    return y;
  }

  Matrix apply(const Matrix& samples) const {
    Matrix out(samples.rows(), output_length(samples.cols()));
    std::vector<double> row(static_cast<std::size_t>(samples.cols()));
    for (Index c = 0; c < samples.rows(); ++c) {
      for (Index t = 0; t < samples.cols(); ++t) row[static_cast<std::size_t>(t)] = samples(c, t);
      const auto y = apply(row);
      for (Index t = 0; t < out.cols(); ++t) out(c, t) = y[static_cast<std::size_t>(t)];
    }
    return out;
  }

 private:
  double source_hz_;
  double target_hz_;
  Ratio ratio_;
  Index half_ = 0;
  std::vector<double> taps_;
};

inline ContinuousRecording resample(const ContinuousRecording& rec, double target_fs = kDecodeRateHz) {
  if (!(target_fs < rec.fs_hz)) {
    throw Error(Errc::InvalidArgument, "resample only reduces the sampling rate");
  }
  const Resampler rs(rec.fs_hz, target_fs);
  ContinuousRecording out;
  out.fs_hz = target_fs;
  out.samples = rs.apply(rec.samples);
  for (const auto& m : rec.markers) {
    out.markers.push_back({std::min(rs.map_index(m.sample), out.length() - 1), m.label});
  }
  return out;
}

/// Windows [onset - pre_s, onset + dur_s) around every marker, at the
/// recording's own rate, including the pre-onset samples.
inline std::vector<Trial> extract_windows(const ContinuousRecording& rec, double pre_s, double dur_s) {
  const Index pre = static_cast<Index>(std::llround(pre_s * rec.fs_hz));
  const Index dur = static_cast<Index>(std::llround(dur_s * rec.fs_hz));
  std::vector<Trial> out;
  for (const auto& m : rec.markers) {
    if (m.sample - pre < 0 || m.sample + dur > rec.length()) {
      throw Error(Errc::TruncatedTrial, "marker at sample " + std::to_string(m.sample) +
                                            " leaves too little data around the onset");
    }
    Trial t;
    t.samples = rec.samples.middleCols(m.sample - pre, pre + dur);
    t.fs_hz = rec.fs_hz;
    if (m.label >= 0) t.label = m.label;
    out.push_back(std::move(t));
  }
  return out;
}

/// Per-marker trials of dur_s seconds aligned to onset. The pre-onset window
/// must exist in the recording but is dropped from the result.
inline std::vector<Trial> segment_trials(const ContinuousRecording& rec, double pre_s = 0.5,
                                         double dur_s = 31.5) {
  const Index pre = static_cast<Index>(std::llround(pre_s * rec.fs_hz));
  auto trials = extract_windows(rec, pre_s, dur_s);
  for (auto& t : trials) {
    t.samples = Matrix(t.samples.rightCols(t.samples.cols() - pre));
  }
  return trials;
}

struct PipelineConfig {
  double notch_hz = 50.0;  // <= 0 disables the notch
  double notch_q = 30.0;
  double highpass_hz = 6.0;
  double lowpass_hz = 50.0;
  int order = 4;
  double target_fs = kDecodeRateHz;
  double pre_s = 0.5;
  double dur_s = 31.5;
};

inline Matrix filter_stage(const PipelineConfig& cfg, const Matrix& samples, double fs_hz) {
  Matrix x = samples;
  if (cfg.notch_hz > 0.0) {
    x = apply_zero_phase(FilterSpec::notch(cfg.notch_hz, cfg.notch_q), x, fs_hz);
  }
  return apply_zero_phase(FilterSpec::bandpass(cfg.highpass_hz, cfg.lowpass_hz, cfg.order), x, fs_hz);
}

/// Resamples one raw window and removes its pre-onset part.
inline Trial resample_and_crop(const PipelineConfig& cfg, const Trial& window, Index pre_samples) {
  Trial out;
  out.label = window.label;
  out.fs_hz = cfg.target_fs;
  out.frame_rate_hz = window.frame_rate_hz;
  Matrix x = window.samples;
  Index pre = pre_samples;
  if (window.fs_hz != cfg.target_fs) {
    const Resampler rs(window.fs_hz, cfg.target_fs);
    x = rs.apply(window.samples);
    pre = rs.map_index(pre_samples);
  }
  const Index keep = std::min<Index>(x.cols() - pre, samples_for_duration(cfg.dur_s, cfg.target_fs,
                                                                          window.frame_rate_hz));
  if (keep <= 0) throw Error(Errc::TruncatedTrial, "window shorter than its pre-onset part");
  out.samples = x.middleCols(pre, keep);
  return out;
}

/// Raw window (with pre-onset samples) to decode-ready trial:
/// notch, bandpass, resample, crop.
inline Trial preprocess_window(const PipelineConfig& cfg, const Trial& window, Index pre_samples) {
  Trial filtered = window;
  filtered.samples = filter_stage(cfg, window.samples, window.fs_hz);
  return resample_and_crop(cfg, filtered, pre_samples);
}

/// Full chain on a continuous recording: notch, bandpass, segment with the
/// pre-onset window, resample, crop the pre-onset window.
inline std::vector<Trial> preprocess(const ContinuousRecording& rec, const PipelineConfig& cfg = {}) {
  ContinuousRecording filtered = rec;
  filtered.samples = filter_stage(cfg, rec.samples, rec.fs_hz);
  const Index pre = static_cast<Index>(std::llround(cfg.pre_s * rec.fs_hz));
  std::vector<Trial> out;
  for (const auto& w : extract_windows(filtered, cfg.pre_s, cfg.dur_s)) {
    out.push_back(resample_and_crop(cfg, w, pre));
  }
  return out;
}

}  // namespace cvep
